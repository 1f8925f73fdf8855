#include "mmdyn/experiments.hpp"

#include <cmath>
#include <sstream>

#include "mmdyn/error.hpp"

namespace mmdyn {

using nlohmann::json;

const ExperimentRow& ExperimentReport::row(const std::string& label) const {
  for (const auto& r : rows)
    if (r.label == label) return r;
  throw Error("no report row '" + label + "'");
}

std::string ExperimentReport::table(char delimiter) const {
  std::vector<std::pair<std::string, MetricsSummary>> cells;
  for (const auto& r : rows) cells.emplace_back(r.label, r.summary);
  return render_table(label_column, cells, delimiter);
}

namespace {

// Re-throws with the run tag prepended, keeping the error category.
[[noreturn]] void rethrow_tagged(const std::string& tag) {
  try {
    throw;
  } catch (const TrainingError& e) {
    throw TrainingError(tag + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(tag + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(tag + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(tag + ": " + e.what());
  }
}

ExperimentRow run_row(const std::string& label, const TrainConfig& config, const MultimodalDataset& dataset,
                      const SplitSpec& split, const std::vector<std::uint64_t>& seeds, const RunObserver& observer,
                      const std::string& tag_prefix) {
  ExperimentRow row;
  row.label = label;
  for (std::uint64_t seed : seeds) {
    TrainConfig run = config;
    run.seed = seed;
    try {
      const TrainedModel model = train(run, dataset, split);
      const Metrics m = evaluate(model, dataset, split.test_indices);
      row.seeds.push_back(seed);
      row.runs.push_back(m);
      if (observer) observer(label, seed, model, m);
    } catch (...) {
      rethrow_tagged(tag_prefix + " " + label + " seed " + std::to_string(seed));
    }
  }
  row.summary = summarize(row.runs);
  return row;
}

}  // namespace

ExperimentReport run_ablation(const TrainConfig& config, const MultimodalDataset& dataset, const SplitSpec& split,
                              const std::vector<AblationVariant>& variants, const std::vector<std::uint64_t>& seeds,
                              const RunObserver& observer) {
  if (variants.empty()) throw ConfigError("ablation needs at least one variant");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  ExperimentReport report{"Variant", {}};
  for (AblationVariant v : variants) {
    TrainConfig c = config;
    c.ablation_variant = v;
    report.rows.push_back(run_row(to_string(v), c, dataset, split, seeds, observer, "variant"));
  }
  return report;
}

std::string to_string(SweepAxis axis) { return axis == SweepAxis::latent_dims ? "latent_dims" : "lambdas"; }

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "latent_dims") return SweepAxis::latent_dims;
  if (s == "lambdas") return SweepAxis::lambdas;
  throw ConfigError("unknown sweep axis '" + s + "' (expected latent_dims or lambdas)");
}

std::string sweep_label(const std::vector<double>& value) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < value.size(); ++i) os << (i ? ", " : "") << value[i];
  os << ')';
  return os.str();
}

TrainConfig apply_sweep_value(const TrainConfig& base, SweepAxis axis, const std::vector<double>& value,
                              const MultimodalDataset& dataset) {
  TrainConfig c = base;
  if (axis == SweepAxis::lambdas) {
    if (value.size() != 3) throw ConfigError("lambda sweep values need 3 entries, got " + sweep_label(value));
    c.loss_weights = {value[0], value[1], value[2]};
  } else {
    if (value.size() != dataset.modalities.size())
      throw ConfigError("latent sweep value " + sweep_label(value) + " needs one entry per modality (" +
                        std::to_string(dataset.modalities.size()) + ")");
    for (std::size_t m = 0; m < value.size(); ++m) {
      if (value[m] < 1.0 || value[m] != std::floor(value[m]))
        throw ConfigError("latent dims must be positive integers, got " + sweep_label(value));
      c.latent_dims[dataset.modalities[m].name] = static_cast<int>(value[m]);
    }
  }
  c.validate();
  return c;
}

ExperimentReport run_sweep(const TrainConfig& base, SweepAxis axis, const std::vector<std::vector<double>>& values,
                           const MultimodalDataset& dataset, const SplitSpec& split,
                           const std::vector<std::uint64_t>& seeds, const RunObserver& observer) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  ExperimentReport report{axis == SweepAxis::latent_dims ? "Latent dims" : "Lambdas", {}};
  for (const auto& v : values) {
    const TrainConfig c = apply_sweep_value(base, axis, v, dataset);
    report.rows.push_back(run_row(sweep_label(v), c, dataset, split, seeds, observer, to_string(axis)));
  }
  return report;
}

json to_json(const ExperimentReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    json runs = json::array();
    for (std::size_t i = 0; i < r.runs.size(); ++i) runs.push_back({{"seed", r.seeds[i]}, {"metrics", to_json(r.runs[i])}});
    rows.push_back({{"label", r.label}, {"summary", to_json(r.summary)}, {"runs", runs}});
  }
  return {{"label_column", report.label_column}, {"columns", Metrics::column_names()}, {"rows", rows}};
}

}  // namespace mmdyn
