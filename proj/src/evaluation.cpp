#include "mmdyn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mmdyn/error.hpp"
#include "mmdyn/fusion.hpp"

namespace mmdyn {

using nlohmann::json;

std::vector<double> Metrics::as_vector() const {
  return {f1_weighted, f1_macro, recall_weighted, precision_weighted, accuracy, balanced_accuracy};
}

const std::vector<std::string>& Metrics::column_names() {
  static const std::vector<std::string> names{"F1 Score", "F1 macro", "Recall", "Precision", "Accuracy",
                                              "Balanced accuracy"};
  return names;
}

const std::vector<std::string>& Metrics::json_keys() {
  static const std::vector<std::string> keys{"f1_weighted",        "f1_macro", "recall_weighted",
                                             "precision_weighted", "accuracy", "balanced_accuracy"};
  return keys;
}

namespace {

Metrics from_vector(const std::vector<double>& v) {
  return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

}  // namespace

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels, int class_count) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw ConfigError("compute_metrics: predictions and labels must be nonempty and of equal length");
  if (class_count < 1) throw ConfigError("compute_metrics: class_count must be >= 1");
  const auto c = static_cast<std::size_t>(class_count);
  std::vector<long> tp(c, 0), support(c, 0), predicted(c, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], p = predictions[i];
    if (y < 0 || y >= class_count || p < 0 || p >= class_count)
      throw ConfigError("compute_metrics: class index out of range at position " + std::to_string(i));
    ++support[static_cast<std::size_t>(y)];
    ++predicted[static_cast<std::size_t>(p)];
    if (y == p) ++tp[static_cast<std::size_t>(y)];
  }
  const double n = static_cast<double>(labels.size());
  Metrics m;
  long correct = 0;
  for (std::size_t k = 0; k < c; ++k) {
    const double recall = support[k] ? static_cast<double>(tp[k]) / static_cast<double>(support[k]) : 0.0;
    const double precision = predicted[k] ? static_cast<double>(tp[k]) / static_cast<double>(predicted[k]) : 0.0;
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    const double w = static_cast<double>(support[k]) / n;
    m.f1_weighted += w * f1;
    m.recall_weighted += w * recall;
    m.precision_weighted += w * precision;
    m.f1_macro += f1;
    m.balanced_accuracy += recall;
    correct += tp[k];
  }
  m.f1_macro /= static_cast<double>(c);
  m.balanced_accuracy /= static_cast<double>(c);
  m.accuracy = static_cast<double>(correct) / n;
  return m;
}

MetricsSummary summarize(const std::vector<Metrics>& runs) {
  if (runs.empty()) throw ConfigError("summarize: no runs");
  MetricsSummary s;
  s.runs = static_cast<int>(runs.size());
  std::vector<double> mean(6, 0.0), sd(6, 0.0);
  for (const auto& r : runs) {
    const auto v = r.as_vector();
    for (std::size_t k = 0; k < 6; ++k) mean[k] += v[k];
  }
  for (double& x : mean) x /= static_cast<double>(runs.size());
  if (runs.size() > 1) {
    for (const auto& r : runs) {
      const auto v = r.as_vector();
      for (std::size_t k = 0; k < 6; ++k) sd[k] += (v[k] - mean[k]) * (v[k] - mean[k]);
    }
    for (double& x : sd) x = std::sqrt(x / static_cast<double>(runs.size() - 1));
  }
  s.mean = from_vector(mean);
  s.stddev = from_vector(sd);
  return s;
}

TcpErrorCurve tcp_error_curve(std::span<const double> tcps, std::span<const double> tcp_hats,
                              std::span<const double> thresholds) {
  if (tcps.empty() || tcps.size() != tcp_hats.size())
    throw ConfigError("tcp_error_curve: tcps and tcp_hats must be nonempty and of equal length");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (!(thresholds[i] >= thresholds[i - 1])) throw ConfigError("tcp_error_curve: thresholds must ascend");
  TcpErrorCurve curve;
  curve.thresholds.assign(thresholds.begin(), thresholds.end());
  // Relative overestimation of each kept sample; a sample counts at x iff
  // x*tcp + tcp <= tcp_hat.
  std::vector<std::pair<double, double>> kept;
  for (std::size_t i = 0; i < tcps.size(); ++i) {
    if (tcps[i] == 0.0) {
      ++curve.excluded_zero_tcp;
    } else {
      kept.emplace_back(tcps[i], tcp_hats[i]);
    }
  }
  if (kept.empty()) throw ConfigError("tcp_error_curve: every sample has tcp == 0");
  for (double x : thresholds) {
    long count = 0;
    for (const auto& [tcp, hat] : kept)
      if (x * tcp + tcp <= hat) ++count;
    curve.fractions.push_back(static_cast<double>(count) / static_cast<double>(kept.size()));
  }
  return curve;
}

InformativenessMap mean_informativeness_map(const std::vector<InformativenessMap>& maps) {
  if (maps.empty()) throw ConfigError("mean_informativeness_map: no maps");
  InformativenessMap out{maps[0].height, maps[0].width, std::vector<double>(maps[0].values.size(), 0.0)};
  for (const auto& m : maps) {
    if (m.height != out.height || m.width != out.width || m.values.size() != out.values.size())
      throw ShapeError("mean_informativeness_map: shape mismatch");
    for (std::size_t i = 0; i < m.values.size(); ++i) out.values[i] += m.values[i];
  }
  for (double& v : out.values) v /= static_cast<double>(maps.size());
  return out;
}

Inference run_inference(const TrainedModel& trained, const MultimodalDataset& dataset, const std::vector<int>& indices,
                        int batch_size) {
  if (indices.empty()) throw ConfigError("inference: no samples");
  const ModelSpec& spec = trained.model.spec();
  if (dataset.modalities.size() != spec.modalities.size()) throw ShapeError("inference: modality count mismatch");
  for (std::size_t m = 0; m < spec.modalities.size(); ++m)
    if (!(ModalityShape::of(dataset.modalities[m]) == spec.modalities[m]))
      throw ShapeError("inference: modality '" + dataset.modalities[m].name + "' does not match the model");

  ad::NoGradGuard guard;
  const ForwardOptions options = ForwardOptions::from_config(trained.config, spec.modalities.size());
  const BatchBuilder builder(dataset, trained.standardizers);
  Inference inf;
  inf.indices = indices;
  if (spec.kind == ModelKind::mm_dynamics) inf.modalities.resize(spec.modalities.size());
  const int c = spec.class_count;

  auto rows = [c](const ad::Var& probs, std::vector<std::vector<double>>& dst) {
    const auto v = probs.value();
    for (std::size_t r = 0; r * static_cast<std::size_t>(c) < v.size(); ++r)
      dst.emplace_back(v.begin() + static_cast<std::ptrdiff_t>(r * c), v.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
  };

  const auto step = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t start = 0; start < indices.size(); start += step) {
    const std::size_t stop = std::min(indices.size(), start + step);
    const Batch batch = builder.build(std::span<const int>(indices.data() + start, stop - start));
    inf.labels.insert(inf.labels.end(), batch.labels.begin(), batch.labels.end());
    if (spec.kind == ModelKind::early_fusion) {
      rows(trained.model.forward_early_fusion(batch).first, inf.probs);
      continue;
    }
    const ForwardResult r = trained.model.forward(batch, options);
    rows(r.final_probs, inf.probs);
    for (std::size_t m = 0; m < r.modalities.size(); ++m) {
      const auto& fm = r.modalities[m];
      auto& dst = inf.modalities[m];
      rows(fm.probs, dst.probs);
      dst.tcp.insert(dst.tcp.end(), fm.tcp.value().begin(), fm.tcp.value().end());
      dst.tcp_hat.insert(dst.tcp_hat.end(), fm.tcp_hat.value().begin(), fm.tcp_hat.value().end());
      if (!fm.gate.defined()) continue;
      const auto& ms = spec.modalities[m];
      if (ms.kind == ModalityKind::tabular) {
        const auto g = fm.gate.value();
        const auto d = static_cast<std::size_t>(ms.features);
        for (std::size_t row = 0; row < g.size() / d; ++row)
          dst.gates.emplace_back(g.begin() + static_cast<std::ptrdiff_t>(row * d),
                                 g.begin() + static_cast<std::ptrdiff_t>((row + 1) * d));
      } else {
        const auto g = fm.gate_map.value();
        const auto hw = static_cast<std::size_t>(ms.height) * static_cast<std::size_t>(ms.width);
        for (std::size_t row = 0; row < g.size() / hw; ++row)
          dst.maps.push_back({ms.height, ms.width,
                              std::vector<double>(g.begin() + static_cast<std::ptrdiff_t>(row * hw),
                                                  g.begin() + static_cast<std::ptrdiff_t>((row + 1) * hw))});
      }
    }
  }
  for (const auto& p : inf.probs) inf.predictions.push_back(argmax(p));
  return inf;
}

Metrics evaluate(const TrainedModel& model, const MultimodalDataset& dataset, const std::vector<int>& indices) {
  const Inference inf = run_inference(model, dataset, indices);
  return compute_metrics(inf.predictions, inf.labels, model.model.spec().class_count);
}

Metrics evaluate_masked(const TrainedModel& model, const MultimodalDataset& dataset, const SplitSpec& split,
                        const std::string& masked_modality, double intensity) {
  const auto& spec = model.model.spec();
  const bool known = std::any_of(spec.modalities.begin(), spec.modalities.end(),
                                 [&](const ModalityShape& m) { return m.name == masked_modality; });
  if (!known) throw ConfigError("modality '" + masked_modality + "' is not part of the model");
  MultimodalDataset masked = dataset;
  const int idx = masked.modality_index(masked_modality);
  masked.modalities[static_cast<std::size_t>(idx)] =
      mask_image_modality(masked.modalities[static_cast<std::size_t>(idx)], intensity);
  return evaluate(model, masked, split.test_indices);
}

std::vector<double> mean_gates(const ModalityInference& inference) {
  if (inference.gates.empty()) throw ConfigError("mean_gates: no gate vectors (gates disabled or image modality)");
  std::vector<double> mean(inference.gates[0].size(), 0.0);
  for (const auto& g : inference.gates)
    for (std::size_t i = 0; i < g.size(); ++i) mean[i] += g[i];
  for (double& v : mean) v /= static_cast<double>(inference.gates.size());
  return mean;
}

std::vector<json> confidence_records(const TrainedModel& model, const Inference& inference) {
  std::vector<json> out;
  const auto& spec = model.model.spec();
  for (std::size_t i = 0; i < inference.indices.size(); ++i) {
    for (std::size_t m = 0; m < inference.modalities.size(); ++m) {
      const auto& mi = inference.modalities[m];
      out.push_back({{"sample", inference.indices[i]},
                     {"modality", spec.modalities[m].name},
                     {"tcp", mi.tcp[i]},
                     {"tcp_hat", mi.tcp_hat[i]},
                     {"true_class", inference.labels[i]},
                     {"predicted_class", argmax(mi.probs[i])}});
    }
  }
  return out;
}

json to_json(const Metrics& m) {
  json j;
  const auto v = m.as_vector();
  for (std::size_t k = 0; k < v.size(); ++k) j[Metrics::json_keys()[k]] = v[k];
  return j;
}

json to_json(const MetricsSummary& s) {
  return {{"mean", to_json(s.mean)}, {"std", to_json(s.stddev)}, {"runs", s.runs}};
}

std::string render_table(const std::string& label_column,
                         const std::vector<std::pair<std::string, MetricsSummary>>& rows, char delimiter) {
  std::ostringstream os;
  os << label_column;
  for (const auto& name : Metrics::column_names()) os << delimiter << name;
  os << '\n';
  char cell[64];
  for (const auto& [label, summary] : rows) {
    os << label;
    const auto mean = summary.mean.as_vector();
    const auto sd = summary.stddev.as_vector();
    for (std::size_t k = 0; k < mean.size(); ++k) {
      std::snprintf(cell, sizeof cell, "%.2f ± %.2f", 100.0 * mean[k], 100.0 * sd[k]);
      os << delimiter << cell;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace mmdyn
