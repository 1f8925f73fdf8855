// Classification metrics, TCP error curves, inference over a trained model,
// test-time masking and explainability aggregates.
#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmdyn/confidence.hpp"
#include "mmdyn/informativeness.hpp"
#include "mmdyn/trainer.hpp"

namespace mmdyn {

// All values in [0,1]. Weighted variants weight per-class scores by
// true-class support.
struct Metrics {
  double f1_weighted = 0.0;
  double f1_macro = 0.0;
  double recall_weighted = 0.0;
  double precision_weighted = 0.0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;

  // Column order of the reported tables.
  std::vector<double> as_vector() const;
  static const std::vector<std::string>& column_names();
  static const std::vector<std::string>& json_keys();
  bool operator==(const Metrics&) const = default;
};

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels, int class_count);

struct MetricsSummary {
  Metrics mean;
  Metrics stddev;  // sample standard deviation; 0 for a single run
  int runs = 0;
};
MetricsSummary summarize(const std::vector<Metrics>& runs);

struct TcpErrorCurve {
  std::vector<double> thresholds;
  std::vector<double> fractions;
  int excluded_zero_tcp = 0;
};
// Fraction of samples with x*tcp + tcp <= tcp_hat at each threshold x;
// samples with tcp == 0 are excluded and counted.
TcpErrorCurve tcp_error_curve(std::span<const double> tcps, std::span<const double> tcp_hats,
                              std::span<const double> thresholds);

InformativenessMap mean_informativeness_map(const std::vector<InformativenessMap>& maps);

// Everything the trained model produces for a set of samples.
struct ModalityInference {
  std::vector<std::vector<double>> probs;
  std::vector<double> tcp;
  std::vector<double> tcp_hat;
  std::vector<std::vector<double>> gates;  // tabular gate vectors; empty when gates are off
  std::vector<InformativenessMap> maps;    // image maps; empty when gates are off
};

struct Inference {
  std::vector<int> indices;
  std::vector<int> labels;
  std::vector<int> predictions;
  std::vector<std::vector<double>> probs;
  std::vector<ModalityInference> modalities;  // empty for the early-fusion comparator
};

Inference run_inference(const TrainedModel& model, const MultimodalDataset& dataset, const std::vector<int>& indices,
                        int batch_size = 256);
Metrics evaluate(const TrainedModel& model, const MultimodalDataset& dataset, const std::vector<int>& indices);

// Test metrics with the named image modality replaced by constant images.
Metrics evaluate_masked(const TrainedModel& model, const MultimodalDataset& dataset, const SplitSpec& split,
                        const std::string& masked_modality, double intensity = 0.5);

// Mean tabular gate per feature over the given inference.
std::vector<double> mean_gates(const ModalityInference& inference);

// One JSON object per (sample, modality) with tcp, tcp_hat, true_class and
// predicted_class.
std::vector<nlohmann::json> confidence_records(const TrainedModel& model, const Inference& inference);

nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const MetricsSummary& s);
// Table with header "F1 Score,F1 macro,...", percentages with 2 decimals and
// "mean ± std" cells; `label_column` names the first column.
std::string render_table(const std::string& label_column,
                         const std::vector<std::pair<std::string, MetricsSummary>>& rows, char delimiter = ',');

}  // namespace mmdyn
