// Trained-model checkpoints: one JSON header line (config, model spec,
// standardizers, history, parameter block index) followed by the parameter
// values as raw little-endian doubles in block order.
#pragma once

#include <filesystem>

#include "mmdyn/trainer.hpp"

namespace mmdyn {

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace mmdyn
