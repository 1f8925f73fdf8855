#include "mmdyn/confidence.hpp"

#include <algorithm>
#include <cmath>

#include "mmdyn/error.hpp"

namespace mmdyn {

TabularEncoderParams TabularEncoderParams::create(ParameterStore& store, const std::string& prefix, int features,
                                                  int latent_dim, int classes, Rng& rng) {
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  return {store.add_uniform(prefix + "/hidden_weight", {features, latent_dim}, features, rng),
          store.add_uniform(prefix + "/hidden_bias", {latent_dim}, features, rng),
          store.add_uniform(prefix + "/head_weight", {latent_dim, classes}, latent_dim, rng),
          store.add_uniform(prefix + "/head_bias", {classes}, latent_dim, rng)};
}

TabularEncoderParams TabularEncoderParams::bind(const ParameterStore& store, const std::string& prefix) {
  return {store.get(prefix + "/hidden_weight"), store.get(prefix + "/hidden_bias"),
          store.get(prefix + "/head_weight"), store.get(prefix + "/head_bias")};
}

ImageEncoderParams ImageEncoderParams::create(ParameterStore& store, const std::string& prefix, int channels,
                                              int height, int width, int latent_dim, int classes, Rng& rng) {
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  const int flat = 16 * (height / 4) * (width / 4);
  constexpr int hidden = kHiddenWidth;
  ImageEncoderParams p;
  p.conv1_weight = store.add_uniform(prefix + "/conv1_weight", {8, channels, 3, 3}, channels * 9, rng);
  p.conv1_bias = store.add_uniform(prefix + "/conv1_bias", {8}, channels * 9, rng);
  p.conv2_weight = store.add_uniform(prefix + "/conv2_weight", {16, 8, 3, 3}, 8 * 9, rng);
  p.conv2_bias = store.add_uniform(prefix + "/conv2_bias", {16}, 8 * 9, rng);
  p.fc1_weight = store.add_uniform(prefix + "/fc1_weight", {flat, hidden}, flat, rng);
  p.fc1_bias = store.add_uniform(prefix + "/fc1_bias", {hidden}, flat, rng);
  p.fc2_weight = store.add_uniform(prefix + "/fc2_weight", {hidden, latent_dim}, hidden, rng);
  p.fc2_bias = store.add_uniform(prefix + "/fc2_bias", {latent_dim}, hidden, rng);
  p.head_weight = store.add_uniform(prefix + "/head_weight", {latent_dim, classes}, latent_dim, rng);
  p.head_bias = store.add_uniform(prefix + "/head_bias", {classes}, latent_dim, rng);
  return p;
}

ImageEncoderParams ImageEncoderParams::bind(const ParameterStore& store, const std::string& prefix) {
  ImageEncoderParams p;
  p.conv1_weight = store.get(prefix + "/conv1_weight");
  p.conv1_bias = store.get(prefix + "/conv1_bias");
  p.conv2_weight = store.get(prefix + "/conv2_weight");
  p.conv2_bias = store.get(prefix + "/conv2_bias");
  p.fc1_weight = store.get(prefix + "/fc1_weight");
  p.fc1_bias = store.get(prefix + "/fc1_bias");
  p.fc2_weight = store.get(prefix + "/fc2_weight");
  p.fc2_bias = store.get(prefix + "/fc2_bias");
  p.head_weight = store.get(prefix + "/head_weight");
  p.head_bias = store.get(prefix + "/head_bias");
  return p;
}

TcpRegressorParams TcpRegressorParams::create(ParameterStore& store, const std::string& prefix, int input_dim,
                                              Rng& rng) {
  return {store.add_uniform(prefix + "/weight", {input_dim, 1}, input_dim, rng),
          store.add_uniform(prefix + "/bias", {1}, input_dim, rng)};
}

TcpRegressorParams TcpRegressorParams::bind(const ParameterStore& store, const std::string& prefix) {
  return {store.get(prefix + "/weight"), store.get(prefix + "/bias")};
}

UnimodalOutput unimodal_forward(const ad::Var& gated, const TabularEncoderParams& params) {
  UnimodalOutput out;
  out.latent = ad::relu(ad::affine(gated, params.hidden_weight, params.hidden_bias));
  out.probs = ad::softmax(ad::affine(out.latent, params.head_weight, params.head_bias));
  return out;
}

UnimodalOutput unimodal_forward(const ad::Var& gated, const ImageEncoderParams& params) {
  if (gated.shape().size() != 4) throw ShapeError("image encoder: expected [N,C,H,W]");
  ad::Var x = ad::maxpool2(ad::relu(ad::conv3x3(gated, params.conv1_weight, params.conv1_bias)));
  x = ad::maxpool2(ad::relu(ad::conv3x3(x, params.conv2_weight, params.conv2_bias)));
  const int n = x.dim(0);
  x = ad::reshape(x, {n, static_cast<int>(x.size()) / std::max(n, 1)});
  x = ad::relu(ad::affine(x, params.fc1_weight, params.fc1_bias));
  UnimodalOutput out;
  out.latent = ad::relu(ad::affine(x, params.fc2_weight, params.fc2_bias));
  out.probs = ad::softmax(ad::affine(out.latent, params.head_weight, params.head_bias));
  return out;
}

ad::Var estimate_tcp(const ad::Var& gated, const TcpRegressorParams& params) {
  const int n = gated.dim(0);
  ad::Var flat = gated.shape().size() == 2 ? gated : ad::reshape(gated, {n, static_cast<int>(gated.size()) / n});
  return ad::sigmoid(ad::affine(flat, params.weight, params.bias));
}

ad::Var true_class_probability(const ad::Var& probs, std::span<const int> labels) {
  return ad::gather_rows(probs, labels);
}

ad::Var classification_loss(const std::vector<ad::Var>& probs, std::span<const int> labels) {
  if (probs.empty()) throw ShapeError("classification_loss: no modalities");
  ad::Var total = ad::nll_sum(probs.front(), labels, kProbabilityFloor);
  for (std::size_t m = 1; m < probs.size(); ++m)
    total = ad::add(total, ad::nll_sum(probs[m], labels, kProbabilityFloor));
  return total;
}

ad::Var confidence_loss(const std::vector<ad::Var>& tcp_hats, const std::vector<ad::Var>& tcps,
                        const ad::Var& cls_loss) {
  if (tcp_hats.size() != tcps.size()) throw ShapeError("confidence_loss: modality count mismatch");
  ad::Var total = cls_loss;
  for (std::size_t m = 0; m < tcps.size(); ++m)
    total = ad::add(total, ad::sum(ad::square(ad::sub(tcp_hats[m], tcps[m]))));
  return total;
}

int one_hot_index(std::span<const double> y) {
  int idx = -1;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1.0) {
      if (idx >= 0) throw ConfigError("label vector is not one-hot");
      idx = static_cast<int>(i);
    } else if (y[i] != 0.0) {
      throw ConfigError("label vector is not one-hot");
    }
  }
  if (idx < 0) throw ConfigError("label vector is not one-hot");
  return idx;
}

double classification_loss(const std::vector<std::vector<double>>& probs_per_modality, std::span<const double> y) {
  const int k = one_hot_index(y);
  double loss = 0.0;
  for (const auto& p : probs_per_modality) {
    if (p.size() != y.size()) throw ShapeError("classification_loss: length mismatch");
    loss -= std::log(std::max(p[static_cast<std::size_t>(k)], kProbabilityFloor));
  }
  return loss;
}

double true_class_probability(std::span<const double> y, std::span<const double> p) {
  if (y.size() != p.size()) throw ShapeError("true_class_probability: length mismatch");
  double tcp = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) tcp += y[i] * p[i];
  return tcp;
}

double confidence_loss(const std::vector<ConfidenceRecord>& records, double cls_loss) {
  double sq = 0.0;
  for (const auto& r : records) sq += (r.tcp_hat - r.tcp) * (r.tcp_hat - r.tcp);
  return sq + cls_loss;
}

CalibrationStats tcp_calibration_stats(std::span<const double> tcps, std::span<const double> tcp_hats) {
  if (tcps.empty() || tcps.size() != tcp_hats.size())
    throw ConfigError("tcp_calibration_stats: need equal-length nonempty lists");
  CalibrationStats s;
  for (std::size_t i = 0; i < tcps.size(); ++i) {
    const double e = std::abs(tcp_hats[i] - tcps[i]);
    s.mae += e;
    s.mean_tcp += tcps[i];
    s.max_abs_error = std::max(s.max_abs_error, e);
  }
  s.mae /= static_cast<double>(tcps.size());
  s.mean_tcp /= static_cast<double>(tcps.size());
  return s;
}

}  // namespace mmdyn
