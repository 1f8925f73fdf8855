#include "mmdyn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mmdyn/checkpoint.hpp"
#include "mmdyn/error.hpp"
#include "mmdyn/experiments.hpp"
#include "mmdyn/pipeline.hpp"

namespace mmdyn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& verbs() {
  static const std::vector<std::string> v{"synth", "train", "eval", "ablate", "sweep", "explain", "mask-eval"};
  return v;
}

namespace {

struct Options {
  std::string config_path;
  std::string output = ".";
  std::string checkpoint;
  std::string seeds;
  std::string variants = "none,FI,MI,both";
  std::string axis;
  std::string values;
  std::string mask_modality;
  std::uint64_t seed = 0;
  int top = 10;
  std::vector<std::string> overrides;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

// A run.json written by a previous invocation is accepted as a config file.
json load_document(const Options& o) {
  json doc = o.config_path.empty() ? json::object() : read_json_file(o.config_path);
  if (doc.is_object() && doc.contains("verb") && doc.contains("config")) doc = doc["config"];
  for (const auto& a : o.overrides) apply_override(doc, a);
  return doc;
}

TrainConfig load_config(const Options& o) {
  TrainConfig c = train_config_from_json(load_document(o));
  c.validate();
  return c;
}

void write_run_json(const Options& o, const std::string& verb, const json& config, json extra = json::object()) {
  json run{{"verb", verb}, {"config", config}, {"overrides", o.overrides}};
  for (auto& [k, v] : extra.items()) run[k] = v;
  write_json(fs::path(o.output) / "run.json", run);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text, std::uint64_t fallback) {
  if (text.empty()) return {fallback};
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("invalid seed '" + item + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("no seeds given");
  return seeds;
}

std::vector<AblationVariant> parse_variants(const std::string& text) {
  std::vector<AblationVariant> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(ablation_variant_from_string(item));
  if (out.empty()) throw ConfigError("no variants given");
  return out;
}

// "35,250;70,500" -> {{35,250},{70,500}}
std::vector<std::vector<double>> parse_values(const std::string& text) {
  std::vector<std::vector<double>> out;
  std::stringstream rows(text);
  std::string row;
  while (std::getline(rows, row, ';')) {
    std::vector<double> v;
    std::stringstream cells(row);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ConfigError("invalid sweep value '" + cell + "'");
      }
    }
    if (!v.empty()) out.push_back(v);
  }
  if (out.empty()) throw ConfigError("no sweep values given");
  return out;
}

std::string single_row_table(const std::vector<std::pair<std::string, Metrics>>& rows) {
  std::vector<std::pair<std::string, MetricsSummary>> cells;
  for (const auto& [label, m] : rows) cells.emplace_back(label, summarize({m}));
  return render_table("Run", cells);
}

std::vector<std::string> masked_modalities(const TrainConfig& config, const MultimodalDataset& dataset,
                                           const std::string& flag) {
  const std::string name = !flag.empty() ? flag : config.mask_modality;
  if (!name.empty()) return {name};
  std::vector<std::string> out;
  for (const auto& m : dataset.modalities)
    if (m.kind == ModalityKind::image) out.push_back(m.name);
  if (out.empty()) throw ConfigError("dataset has no image modality to mask");
  return out;
}

// Writes the evaluation artifacts of a trained model on the test split.
std::vector<std::pair<std::string, Metrics>> write_evaluation(const TrainedModel& model, const PreparedData& data,
                                                              const fs::path& dir) {
  const Inference inf = run_inference(model, data.dataset, data.split.test_indices);
  const Metrics m = compute_metrics(inf.predictions, inf.labels, data.dataset.class_count);
  std::vector<std::pair<std::string, Metrics>> rows{{"test", m}};
  json doc{{"test", to_json(m)}};
  if (!inf.modalities.empty()) {
    write_jsonl(dir / "confidence.jsonl", confidence_records(model, inf));
    json calibration = json::object();
    for (std::size_t k = 0; k < inf.modalities.size(); ++k) {
      const auto& mi = inf.modalities[k];
      const std::string& name = model.model.spec().modalities[k].name;
      const auto stats = tcp_calibration_stats(mi.tcp, mi.tcp_hat);
      calibration[name] = {{"mae", stats.mae}, {"mean_tcp", stats.mean_tcp}, {"max_abs_error", stats.max_abs_error}};
      try {
        const TcpErrorCurve curve = tcp_error_curve(mi.tcp, mi.tcp_hat, default_curve_thresholds());
        write_curve(dir / ("tcp_curve_" + name + ".csv"), curve);
        calibration[name]["excluded_zero_tcp"] = curve.excluded_zero_tcp;
      } catch (const ConfigError&) {
        calibration[name]["excluded_zero_tcp"] = mi.tcp.size();
      }
    }
    write_json(dir / "calibration.json", calibration);
  }
  if (model.config.mask_image_at_test) {
    for (const auto& name : masked_modalities(model.config, data.dataset, "")) {
      const Metrics masked = evaluate_masked(model, data.dataset, data.split, name, model.config.mask_intensity);
      rows.emplace_back("masked " + name, masked);
      doc["masked"][name] = to_json(masked);
    }
  }
  write_json(dir / "metrics.json", doc);
  write_text(dir / "metrics.csv", single_row_table(rows));
  return rows;
}

int cmd_synth(const Options& o, std::ostream& out) {
  json doc = load_document(o);
  json spec_doc = doc;
  std::uint64_t seed = o.seed;
  if (doc.contains("synthetic")) {
    spec_doc = doc["synthetic"];
    seed = doc.value("data_seed", seed);
  }
  const SyntheticSpec spec = synthetic_spec_from_json(spec_doc);
  spec.validate();
  const SyntheticResult result = synthesize_dataset(spec, seed);
  write_synthetic(result, o.output);
  write_run_json(o, "synth", {{"synthetic", to_json(spec)}, {"data_seed", seed}});
  out << "wrote " << result.dataset.sample_count() << " samples, " << result.dataset.modalities.size()
      << " modalities to " << o.output << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const TrainConfig config = load_config(o);
  const PreparedData data = prepare_data(config);
  const TrainedModel model = train(config, data.dataset, data.split);
  const fs::path dir = o.output;
  save_checkpoint(model, dir / "model.ckpt");
  write_json(dir / "history.json", {{"best_epoch", model.best_epoch}, {"epochs", to_json(model.history)}});
  write_json(dir / "split.json", to_json(data.split));
  const auto rows = write_evaluation(model, data, dir);
  write_run_json(o, "train", to_json(config));
  out << single_row_table(rows);
  return kExitOk;
}

TrainedModel checkpoint_or_train(const Options& o, TrainConfig& config, PreparedData& data) {
  if (!o.checkpoint.empty()) {
    TrainedModel model = load_checkpoint(o.checkpoint);
    config = model.config;
    data = prepare_data(config);
    return model;
  }
  if (o.config_path.empty()) throw ConfigError("either --checkpoint or --config is required");
  config = load_config(o);
  data = prepare_data(config);
  return train(config, data.dataset, data.split);
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw ConfigError("eval requires --checkpoint");
  TrainConfig config;
  PreparedData data;
  const TrainedModel model = checkpoint_or_train(o, config, data);
  const auto rows = write_evaluation(model, data, o.output);
  write_run_json(o, "eval", to_json(config), {{"checkpoint", o.checkpoint}});
  out << single_row_table(rows);
  return kExitOk;
}

int cmd_mask_eval(const Options& o, std::ostream& out) {
  TrainConfig config;
  PreparedData data;
  const TrainedModel model = checkpoint_or_train(o, config, data);
  std::vector<std::pair<std::string, Metrics>> rows{{"unmasked", evaluate(model, data.dataset, data.split.test_indices)}};
  json doc{{"unmasked", to_json(rows[0].second)}, {"intensity", config.mask_intensity}};
  for (const auto& name : masked_modalities(config, data.dataset, o.mask_modality)) {
    const Metrics m = evaluate_masked(model, data.dataset, data.split, name, config.mask_intensity);
    rows.emplace_back("masked " + name, m);
    doc["masked"][name] = to_json(m);
  }
  write_json(fs::path(o.output) / "mask_eval.json", doc);
  write_text(fs::path(o.output) / "mask_eval.csv", single_row_table(rows));
  write_run_json(o, "mask-eval", to_json(config), {{"checkpoint", o.checkpoint}, {"mask_modality", o.mask_modality}});
  out << single_row_table(rows);
  return kExitOk;
}

int cmd_explain(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw ConfigError("explain requires --checkpoint");
  TrainConfig config;
  PreparedData data;
  const TrainedModel model = checkpoint_or_train(o, config, data);
  if (!ForwardOptions::from_config(config, data.dataset.modalities.size()).use_gates)
    throw ConfigError("model was trained without feature informativeness (variant " +
                      to_string(config.ablation_variant) + ")");
  const Inference inf = run_inference(model, data.dataset, data.split.test_indices);
  const fs::path dir = o.output;
  json summary = json::object();
  for (std::size_t k = 0; k < inf.modalities.size(); ++k) {
    const auto& ms = model.model.spec().modalities[k];
    if (ms.kind == ModalityKind::tabular) {
      const auto ranking = rank_features(mean_gates(inf.modalities[k]), std::min(o.top, ms.features), ms.feature_names);
      write_ranking(dir / ("ranking_" + ms.name + ".csv"), ranking);
      json top = json::array();
      for (const auto& r : ranking) top.push_back({{"index", r.index}, {"name", r.name}, {"mean_gate", r.mean_gate}});
      summary[ms.name] = {{"kind", "tabular"}, {"top", top}};
      out << ms.name << ": top " << ranking.size() << " features written\n";
    } else {
      const auto& maps = inf.modalities[k].maps;
      for (std::size_t i = 0; i < maps.size(); ++i) {
        char file[32];
        std::snprintf(file, sizeof file, "%06d.png", inf.indices[i]);
        write_heatmap(dir / ("heatmaps_" + ms.name) / file, maps[i]);
      }
      const InformativenessMap mean = mean_informativeness_map(maps);
      write_heatmap(dir / ("heatmap_" + ms.name + ".png"), mean);
      summary[ms.name] = {{"kind", "image"}, {"height", mean.height}, {"width", mean.width}, {"grid", mean.grid()}};
      out << ms.name << ": mean heat-map written\n";
    }
  }
  write_json(dir / "explain.json", summary);
  write_run_json(o, "explain", to_json(config), {{"checkpoint", o.checkpoint}, {"top", o.top}});
  return kExitOk;
}

RunObserver run_writer(const fs::path& dir) {
  return [dir](const std::string& label, std::uint64_t seed, const TrainedModel& model, const Metrics& m) {
    std::string safe = label;
    std::replace_if(safe.begin(), safe.end(), [](char c) { return !std::isalnum(static_cast<unsigned char>(c)); }, '_');
    const fs::path run = dir / "runs" / safe / ("seed_" + std::to_string(seed));
    write_json(run / "metrics.json", to_json(m));
    write_json(run / "history.json", {{"best_epoch", model.best_epoch}, {"epochs", to_json(model.history)}});
  };
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const TrainConfig config = load_config(o);
  const auto variants = parse_variants(o.variants);
  const auto seeds = parse_seeds(o.seeds, config.seed);
  const PreparedData data = prepare_data(config);
  const ExperimentReport report = run_ablation(config, data.dataset, data.split, variants, seeds, run_writer(o.output));
  write_json(fs::path(o.output) / "ablation.json", to_json(report));
  write_text(fs::path(o.output) / "ablation.csv", report.table());
  write_run_json(o, "ablate", to_json(config), {{"variants", o.variants}, {"seeds", seeds}});
  out << report.table();
  return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const TrainConfig config = load_config(o);
  if (o.axis.empty()) throw ConfigError("sweep requires --axis (latent_dims or lambdas)");
  const SweepAxis axis = sweep_axis_from_string(o.axis);
  const auto values = parse_values(o.values);
  const auto seeds = parse_seeds(o.seeds, config.seed);
  const PreparedData data = prepare_data(config);
  const ExperimentReport report =
      run_sweep(config, axis, values, data.dataset, data.split, seeds, run_writer(o.output));
  write_json(fs::path(o.output) / "sweep.json", to_json(report));
  write_text(fs::path(o.output) / "sweep.csv", report.table());
  write_run_json(o, "sweep", to_json(config), {{"axis", o.axis}, {"values", values}, {"seeds", seeds}});
  out << report.table();
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    err << "error[usage]: missing verb; expected one of synth, train, eval, ablate, sweep, explain, mask-eval\n";
    return kExitUsage;
  }
  const std::string& verb = args[0];
  if (verb == "-h" || verb == "--help") {
    out << "usage: mmdyn <synth|train|eval|ablate|sweep|explain|mask-eval> [options] [key=value ...]\n";
    return kExitOk;
  }
  if (std::find(verbs().begin(), verbs().end(), verb) == verbs().end()) {
    err << "error[usage]: unknown verb '" << verb << "'\n";
    return kExitUsage;
  }

  Options o;
  CLI::App app{"mmdyn " + verb, "mmdyn " + verb};
  app.add_option("-c,--config", o.config_path, "JSON config file (a previous run.json also works)");
  app.add_option("-o,--output", o.output, "output directory");
  app.add_option("overrides", o.overrides, "dotted key=value config overrides");
  if (verb == "synth") app.add_option("--seed", o.seed, "generation seed when the config is a bare synthetic spec");
  if (verb == "eval" || verb == "explain" || verb == "mask-eval")
    app.add_option("--checkpoint", o.checkpoint, "trained model checkpoint");
  if (verb == "ablate") {
    app.add_option("--variants", o.variants, "comma-separated subset of none,FI,MI,both");
    app.add_option("--seeds", o.seeds, "comma-separated seeds");
  }
  if (verb == "sweep") {
    app.add_option("--axis", o.axis, "latent_dims or lambdas");
    app.add_option("--values", o.values, "';'-separated tuples, e.g. 35,250;70,500");
    app.add_option("--seeds", o.seeds, "comma-separated seeds");
  }
  if (verb == "mask-eval") app.add_option("--mask-modality", o.mask_modality, "image modality to mask");
  if (verb == "explain") app.add_option("--top", o.top, "number of ranked features");

  try {
    std::vector<std::string> rest(args.begin() + 1, args.end());
    std::reverse(rest.begin(), rest.end());
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    fs::create_directories(o.output);
    if (verb == "synth") return cmd_synth(o, out);
    if (verb == "train") return cmd_train(o, out);
    if (verb == "eval") return cmd_eval(o, out);
    if (verb == "ablate") return cmd_ablate(o, out);
    if (verb == "sweep") return cmd_sweep(o, out);
    if (verb == "explain") return cmd_explain(o, out);
    return cmd_mask_eval(o, out);
  } catch (const ConfigError& e) {
    err << "error[config]: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error[runtime]: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace mmdyn::cli
