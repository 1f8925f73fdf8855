// Late fusion of unimodal latents (confidence-weighted or static), the final
// classifier, and assembly of the three-part training objective.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "mmdyn/autodiff.hpp"
#include "mmdyn/parameters.hpp"

namespace mmdyn {

struct LossWeights {
  double lambda1 = 1.0;  // feature gate sparsity
  double lambda2 = 1.0;  // confidence (TCP regression + unimodal classification)
  double lambda3 = 1.0;  // final classification

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

enum class FusionMode { dynamic, fixed };

struct FusionConfig {
  FusionMode mode = FusionMode::dynamic;
  std::vector<double> static_weights;  // used when mode == fixed; empty = 1/M each
  std::vector<int> latent_dims;

  // Resolved static weights for M modalities.
  std::vector<double> weights_for(std::size_t modality_count) const;
  void validate(std::size_t modality_count) const;
};

std::string to_string(FusionMode mode);
FusionMode fusion_mode_from_string(const std::string& s);

// Single affine map (sum of latent dims) -> C followed by a softmax.
struct FinalClassifierParams {
  ad::Var weight;
  ad::Var bias;

  static FinalClassifierParams create(ParameterStore& store, const std::string& prefix, int input_dim, int classes,
                                      Rng& rng);
  static FinalClassifierParams bind(const ParameterStore& store, const std::string& prefix);
};

// Batched, differentiable forms. tcp_hats are [N,1].
ad::Var fuse_dynamic(const std::vector<ad::Var>& latents, const std::vector<ad::Var>& tcp_hats);
ad::Var fuse_static(const std::vector<ad::Var>& latents, std::span<const double> weights);
ad::Var final_classifier_forward(const ad::Var& fused, const FinalClassifierParams& params);
// Batch sum of -log p[y] with the 1e-12 floor.
ad::Var final_loss(const ad::Var& probs, std::span<const int> labels);
ad::Var total_loss(const ad::Var& l1, const ad::Var& conf, const ad::Var& final, const LossWeights& weights);

// Single-sample value forms.
std::vector<double> fuse_dynamic(const std::vector<std::vector<double>>& latents, std::span<const double> tcp_hats);
std::vector<double> fuse_static(const std::vector<std::vector<double>>& latents, std::span<const double> weights);
std::vector<double> final_classifier_forward(std::span<const double> fused, const FinalClassifierParams& params);
double final_loss(std::span<const double> p, std::span<const double> y);
double total_loss(double l1, double conf, double final, const LossWeights& weights);

// Hard prediction; ties resolve to the lowest class index.
int argmax(std::span<const double> p);

}  // namespace mmdyn
