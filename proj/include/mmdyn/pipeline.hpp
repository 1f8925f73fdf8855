// Run plumbing shared by the CLI and the Python bindings: resolving the data
// source and split of a config, and writing plot-ready artifacts.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmdyn/evaluation.hpp"

namespace mmdyn {

struct PreparedData {
  MultimodalDataset dataset;
  std::optional<GroundTruth> truth;
  SplitSpec split;
};

// Loads config.dataset (with ground_truth.json when present) or synthesizes
// config.synthetic with config.data_seed, then splits by patient. Without
// configured test patients the last patient id in sorted order is held out.
PreparedData prepare_data(const TrainConfig& config);

// Writes a synthetic dataset directory plus ground_truth.json.
void write_synthetic(const SyntheticResult& result, const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

// "threshold,fraction" rows.
void write_curve(const std::filesystem::path& path, const TcpErrorCurve& curve);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);
// "rank,feature_name,mean_gate" rows; unnamed features are written as f<index>.
void write_ranking(const std::filesystem::path& path, const std::vector<RankedFeature>& ranking);
// Gate values map directly to gray levels (0 -> black, 1 -> white).
void write_heatmap(const std::filesystem::path& path, const InformativenessMap& map);

// Thresholds 0, 0.1, ..., 2.0 used for exported curves.
std::vector<double> default_curve_thresholds();

}  // namespace mmdyn
