// Joint optimization, the early-fusion comparator, ablations and sweeps.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmdyn/config.hpp"
#include "mmdyn/data.hpp"
#include "mmdyn/model.hpp"

namespace mmdyn {

// Adam with bias correction; no weight decay.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
  void step(ParameterStore& params);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Per-sample means over an epoch.
struct LossBreakdown {
  double l1 = 0.0;
  double conf = 0.0;
  double final = 0.0;
  double total = 0.0;
  bool operator==(const LossBreakdown&) const = default;
};

struct EpochRecord {
  LossBreakdown train;
  LossBreakdown val;
  double val_balanced_accuracy = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainedModel {
  TrainConfig config;
  MultimodalModel model;
  std::vector<Standardizer> standardizers;
  int best_epoch = 0;
  std::vector<EpochRecord> history;
};

TrainedModel train(const TrainConfig& config, const MultimodalDataset& dataset, const SplitSpec& split);
TrainedModel train_early_fusion_baseline(const MultimodalDataset& dataset, const SplitSpec& split,
                                         const TrainConfig& config);

nlohmann::json to_json(const EpochRecord& record);
nlohmann::json to_json(const std::vector<EpochRecord>& history);

}  // namespace mmdyn
