// Multi-seed experiment runners: component ablations and grid sweeps.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmdyn/evaluation.hpp"

namespace mmdyn {

// Called after every finished run with the trained model and its test
// metrics; lets callers export artifacts or inspect gates.
using RunObserver = std::function<void(const std::string& label, std::uint64_t seed, const TrainedModel& model,
                                       const Metrics& test_metrics)>;

struct ExperimentRow {
  std::string label;
  std::vector<std::uint64_t> seeds;
  std::vector<Metrics> runs;
  MetricsSummary summary;
};

struct ExperimentReport {
  std::string label_column;
  std::vector<ExperimentRow> rows;

  const ExperimentRow& row(const std::string& label) const;
  std::string table(char delimiter = ',') const;
};

// Trains every variant with every seed on the same split; seeds override
// config.seed.
ExperimentReport run_ablation(const TrainConfig& config, const MultimodalDataset& dataset, const SplitSpec& split,
                              const std::vector<AblationVariant>& variants, const std::vector<std::uint64_t>& seeds,
                              const RunObserver& observer = {});

enum class SweepAxis { latent_dims, lambdas };
std::string to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& s);

// latent_dims values list one dimension per dataset modality in order;
// lambdas values are (lambda1, lambda2, lambda3).
ExperimentReport run_sweep(const TrainConfig& base, SweepAxis axis, const std::vector<std::vector<double>>& values,
                           const MultimodalDataset& dataset, const SplitSpec& split,
                           const std::vector<std::uint64_t>& seeds, const RunObserver& observer = {});

// Config with one sweep point applied.
TrainConfig apply_sweep_value(const TrainConfig& base, SweepAxis axis, const std::vector<double>& value,
                              const MultimodalDataset& dataset);
std::string sweep_label(const std::vector<double>& value);

nlohmann::json to_json(const ExperimentReport& report);

}  // namespace mmdyn
