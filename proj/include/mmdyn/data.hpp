// Multimodal datasets: representation, file ingestion, synthetic generation
// with planted ground truth, patient-wise splitting and test-time masking.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mmdyn {

enum class ModalityKind { tabular, image };

std::string to_string(ModalityKind kind);
ModalityKind modality_kind_from_string(const std::string& s);

// One data source for every sample. Tabular data is N x d row-major; image
// data is N x H x W x C row-major with values in [0, 1].
struct ModalityView {
  std::string name;
  ModalityKind kind = ModalityKind::tabular;
  int samples = 0;
  int features = 0;  // tabular column count
  int height = 0, width = 0, channels = 0;
  std::vector<double> data;
  std::vector<std::string> feature_names;

  static ModalityView tabular(std::string name, int samples, int features, std::vector<double> data,
                              std::vector<std::string> feature_names = {});
  static ModalityView image(std::string name, int samples, int height, int width, int channels,
                            std::vector<double> data);

  // Values per sample: d for tabular, H*W*C for images.
  int sample_size() const;
  const double* sample(int i) const { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
  void validate() const;
};

struct MultimodalDataset {
  std::vector<ModalityView> modalities;
  std::vector<int> labels;
  std::vector<std::string> patient_ids;
  int class_count = 0;

  int sample_count() const { return static_cast<int>(labels.size()); }
  const ModalityView& modality(const std::string& name) const;
  int modality_index(const std::string& name) const;
  void validate() const;
};

struct SplitSpec {
  std::vector<int> train_indices;
  std::vector<int> val_indices;
  std::vector<int> test_indices;
  std::uint64_t seed = 0;

  bool operator==(const SplitSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Synthetic generation

struct PatchRegion {
  int row = 0, col = 0, height = 0, width = 0;
  bool contains(int r, int c) const {
    return r >= row && r < row + height && c >= col && c < col + width;
  }
};

struct SyntheticModalitySpec {
  std::string name;
  ModalityKind kind = ModalityKind::tabular;
  // tabular
  int features = 0;
  std::vector<int> planted;  // explicit indices; drawn at random when empty
  int planted_count = 0;
  // image
  int height = 0, width = 0, channels = 1;
  PatchRegion patch;
  // Probability that a sample carries class signal in this modality.
  double informative_fraction = 1.0;
  // Classes whose samples may carry signal here; empty = all classes.
  std::vector<int> informative_classes;
};

enum class InformativeAssignment {
  independent,  // each modality informative with its own probability
  exclusive,    // exactly one informative modality per sample, drawn by fraction weights
};

struct SyntheticSpec {
  int sample_count = 0;
  int class_count = 2;
  std::vector<double> class_ratios;  // empty = balanced
  int patient_count = 3;
  double noise = 1.0;       // sigma of tabular features
  double separation = 3.0;  // class mean shift on planted features
  double image_noise = 0.1;
  InformativeAssignment assignment = InformativeAssignment::independent;
  std::vector<SyntheticModalitySpec> modalities;

  void validate() const;
};

struct GroundTruth {
  std::map<std::string, std::vector<int>> planted_features;
  std::map<std::string, PatchRegion> planted_patch;
  std::vector<std::vector<std::string>> informative_modalities;
};

struct SyntheticResult {
  MultimodalDataset dataset;
  GroundTruth truth;
};

SyntheticResult synthesize_dataset(const SyntheticSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Operations

ModalityView load_tabular_modality(const std::filesystem::path& path, const std::string& name);

struct ManifestEntry {
  int sample = 0;
  std::string file;
  int label = 0;
  std::string patient;
};
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);

ModalityView load_image_modality(const std::filesystem::path& directory,
                                 const std::filesystem::path& manifest, const std::string& name = "image");

SplitSpec patient_split(const MultimodalDataset& dataset, const std::set<std::string>& test_patients,
                        double val_fraction, std::uint64_t seed);

ModalityView mask_image_modality(const ModalityView& view, double intensity);

// Standardization with statistics from a subset of samples: per column for
// tabular data, per channel for images.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Standardizer fit(const ModalityView& view, const std::vector<int>& indices);
  void apply(std::span<const double> in, std::span<double> out) const;
};

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const nlohmann::json& j);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SyntheticSpec& spec);
nlohmann::json to_json(const SplitSpec& split);

// Writes a dataset directory: dataset.json, samples.csv, one CSV per tabular
// modality and one PNG directory plus manifest per image modality.
void write_dataset(const MultimodalDataset& dataset, const std::filesystem::path& dir);
MultimodalDataset read_dataset(const std::filesystem::path& dir);

void write_tabular(const ModalityView& view, const std::filesystem::path& path);

}  // namespace mmdyn
