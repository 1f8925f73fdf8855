#include "mmdyn/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "mmdyn/confidence.hpp"
#include "mmdyn/error.hpp"

namespace mmdyn {

void LossWeights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !(lambda3 >= 0.0))
    throw ConfigError("loss weights must be nonnegative");
  if (lambda1 == 0.0 && lambda2 == 0.0 && lambda3 == 0.0) throw ConfigError("loss weights must not all be zero");
}

std::string to_string(FusionMode mode) { return mode == FusionMode::dynamic ? "dynamic" : "static"; }

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "dynamic") return FusionMode::dynamic;
  if (s == "static") return FusionMode::fixed;
  throw ConfigError("unknown fusion mode '" + s + "'");
}

std::vector<double> FusionConfig::weights_for(std::size_t modality_count) const {
  if (static_weights.empty()) return std::vector<double>(modality_count, 1.0 / static_cast<double>(modality_count));
  return static_weights;
}

void FusionConfig::validate(std::size_t modality_count) const {
  if (mode == FusionMode::fixed && !static_weights.empty() && static_weights.size() != modality_count)
    throw ConfigError("static_weights must have one entry per modality");
  for (double w : static_weights)
    if (!(w >= 0.0)) throw ConfigError("static weights must be nonnegative");
  if (!latent_dims.empty() && latent_dims.size() != modality_count)
    throw ConfigError("latent_dims must have one entry per modality");
  for (int d : latent_dims)
    if (d < 1) throw ConfigError("latent dims must be positive");
}

FinalClassifierParams FinalClassifierParams::create(ParameterStore& store, const std::string& prefix, int input_dim,
                                                    int classes, Rng& rng) {
  return {store.add_uniform(prefix + "/weight", {input_dim, classes}, input_dim, rng),
          store.add_uniform(prefix + "/bias", {classes}, input_dim, rng)};
}

FinalClassifierParams FinalClassifierParams::bind(const ParameterStore& store, const std::string& prefix) {
  return {store.get(prefix + "/weight"), store.get(prefix + "/bias")};
}

ad::Var fuse_dynamic(const std::vector<ad::Var>& latents, const std::vector<ad::Var>& tcp_hats) {
  if (latents.empty() || latents.size() != tcp_hats.size())
    throw ShapeError("fuse_dynamic: need one tcp estimate per latent");
  std::vector<ad::Var> parts;
  for (std::size_t m = 0; m < latents.size(); ++m) {
    if (tcp_hats[m].shape() != ad::Shape{latents[m].dim(0), 1})
      throw ShapeError("fuse_dynamic: tcp estimate must be [N,1]");
    parts.push_back(ad::mul_broadcast(latents[m], tcp_hats[m]));
  }
  return ad::concat_cols(parts);
}

ad::Var fuse_static(const std::vector<ad::Var>& latents, std::span<const double> weights) {
  if (latents.empty() || latents.size() != weights.size())
    throw ShapeError("fuse_static: need one weight per latent");
  std::vector<ad::Var> parts;
  for (std::size_t m = 0; m < latents.size(); ++m) {
    if (!(weights[m] >= 0.0)) throw ConfigError("fuse_static: negative weight");
    parts.push_back(ad::scale(latents[m], weights[m]));
  }
  return ad::concat_cols(parts);
}

ad::Var final_classifier_forward(const ad::Var& fused, const FinalClassifierParams& params) {
  return ad::softmax(ad::affine(fused, params.weight, params.bias));
}

ad::Var final_loss(const ad::Var& probs, std::span<const int> labels) {
  return ad::nll_sum(probs, labels, kProbabilityFloor);
}

ad::Var total_loss(const ad::Var& l1, const ad::Var& conf, const ad::Var& final, const LossWeights& weights) {
  weights.validate();
  return ad::add(ad::add(ad::scale(l1, weights.lambda1), ad::scale(conf, weights.lambda2)),
                 ad::scale(final, weights.lambda3));
}

std::vector<double> fuse_dynamic(const std::vector<std::vector<double>>& latents, std::span<const double> tcp_hats) {
  if (latents.empty() || latents.size() != tcp_hats.size())
    throw ShapeError("fuse_dynamic: need one tcp estimate per latent");
  std::vector<double> out;
  for (std::size_t m = 0; m < latents.size(); ++m)
    for (double h : latents[m]) out.push_back(h * tcp_hats[m]);
  return out;
}

std::vector<double> fuse_static(const std::vector<std::vector<double>>& latents, std::span<const double> weights) {
  if (latents.empty() || latents.size() != weights.size())
    throw ShapeError("fuse_static: need one weight per latent");
  for (double w : weights)
    if (!(w >= 0.0)) throw ConfigError("fuse_static: negative weight");
  std::vector<double> out;
  for (std::size_t m = 0; m < latents.size(); ++m)
    for (double h : latents[m]) out.push_back(h * weights[m]);
  return out;
}

std::vector<double> final_classifier_forward(std::span<const double> fused, const FinalClassifierParams& params) {
  ad::NoGradGuard guard;
  const int d = static_cast<int>(fused.size());
  if (d != params.weight.dim(0))
    throw ShapeError("final classifier: fused length " + std::to_string(d) + " does not match " +
                     std::to_string(params.weight.dim(0)));
  auto p = final_classifier_forward(ad::constant({1, d}, {fused.begin(), fused.end()}), params);
  return {p.value().begin(), p.value().end()};
}

double final_loss(std::span<const double> p, std::span<const double> y) {
  return classification_loss({std::vector<double>(p.begin(), p.end())}, y);
}

double total_loss(double l1, double conf, double final, const LossWeights& weights) {
  weights.validate();
  return weights.lambda1 * l1 + weights.lambda2 * conf + weights.lambda3 * final;
}

int argmax(std::span<const double> p) {
  if (p.empty()) throw ShapeError("argmax of empty vector");
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace mmdyn
