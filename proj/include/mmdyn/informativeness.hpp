// Feature-level informativeness: per-feature gates for tabular modalities,
// patch-level gates for images, gate application and the L1 sparsity term.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "mmdyn/autodiff.hpp"
#include "mmdyn/parameters.hpp"

namespace mmdyn {

inline constexpr int kPatchSize = 4;

struct GateVector {
  std::string modality;
  std::vector<double> weights;
};

// H x W map, constant on every aligned 4x4 block.
struct InformativenessMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
  // One value per 4x4 block, (H/4) x (W/4) row-major.
  std::vector<double> grid() const;
  bool block_constant() const;
};

// One affine map d -> d followed by a sigmoid.
struct TabularGateParams {
  ad::Var weight;  // [d, d]
  ad::Var bias;    // [d]

  static TabularGateParams create(ParameterStore& store, const std::string& prefix, int features, Rng& rng);
  static TabularGateParams bind(const ParameterStore& store, const std::string& prefix);
  int features() const { return bias.dim(0); }
};

// Compact encoder-decoder producing a sigmoid gate on the (H/4) x (W/4) grid:
//   conv3x3(C->8) relu pool2 -> conv3x3(8->16) relu pool2
//   concat(pool2(stage-1 features)) -> conv3x3(24->1) -> sigmoid -> x4 nearest
struct ImageGateParams {
  ad::Var conv1_weight, conv1_bias;
  ad::Var conv2_weight, conv2_bias;
  ad::Var decoder_weight, decoder_bias;

  static constexpr int kStage1Channels = 8;
  static constexpr int kStage2Channels = 16;

  static ImageGateParams create(ParameterStore& store, const std::string& prefix, int channels, Rng& rng);
  static ImageGateParams bind(const ParameterStore& store, const std::string& prefix);
  int channels() const { return conv1_weight.dim(1); }
};

// Batched, differentiable forms.
ad::Var tabular_gate(const ad::Var& x, const TabularGateParams& params);  // [N,d] -> [N,d]

struct ImageGateOutput {
  ad::Var grid;  // [N,1,H/4,W/4]
  ad::Var map;   // [N,1,H,W]
};
ImageGateOutput image_gate(const ad::Var& images, const ImageGateParams& params);  // images [N,C,H,W]

// x * w; image gates [N,1,H,W] broadcast over channels of [N,C,H,W].
ad::Var apply_gate(const ad::Var& x, const ad::Var& gate);
// Sum of absolute gate values over all given tensors.
ad::Var l1_gate_loss(const std::vector<ad::Var>& gates);

// Single-sample value forms.
GateVector tabular_gate_forward(std::span<const double> x, const TabularGateParams& params,
                                const std::string& modality = {});
// `image` is H x W x C row-major.
InformativenessMap image_gate_forward(std::span<const double> image, int height, int width, int channels,
                                      const ImageGateParams& params);
std::vector<double> apply_gate(std::span<const double> x, std::span<const double> gate);
// Image version: x is H x W x C, the map broadcasts over channels.
std::vector<double> apply_gate(std::span<const double> image, int channels, const InformativenessMap& map);

double l1_gate_loss(const std::vector<GateVector>& gates);
double l1_gate_loss(const std::vector<InformativenessMap>& maps);

struct RankedFeature {
  int index = 0;
  std::string name;
  double mean_gate = 0.0;
};
// Top-k by mean gate, descending; ties by ascending index.
std::vector<RankedFeature> rank_features(std::span<const double> mean_gates, int k,
                                         const std::vector<std::string>& feature_names = {});

}  // namespace mmdyn
