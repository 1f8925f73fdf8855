// Unimodal classifiers, true class probability (TCP), the TCP regressor and
// the classification / confidence losses.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "mmdyn/autodiff.hpp"
#include "mmdyn/parameters.hpp"

namespace mmdyn {

inline constexpr double kProbabilityFloor = 1e-12;

// Tabular: h = relu(x W1 + b1), p = softmax(h Wh + bh).
struct TabularEncoderParams {
  ad::Var hidden_weight, hidden_bias;
  ad::Var head_weight, head_bias;

  static TabularEncoderParams create(ParameterStore& store, const std::string& prefix, int features,
                                     int latent_dim, int classes, Rng& rng);
  static TabularEncoderParams bind(const ParameterStore& store, const std::string& prefix);
  int latent_dim() const { return hidden_bias.dim(0); }
};

// Image: two conv3x3+relu+pool2 stages (C->8->16), two affine+relu layers
// (-> 64 -> latent_dim), then the head latent_dim -> C.
struct ImageEncoderParams {
  ad::Var conv1_weight, conv1_bias;
  ad::Var conv2_weight, conv2_bias;
  ad::Var fc1_weight, fc1_bias;
  ad::Var fc2_weight, fc2_bias;
  ad::Var head_weight, head_bias;

  static constexpr int kHiddenWidth = 64;

  static ImageEncoderParams create(ParameterStore& store, const std::string& prefix, int channels, int height,
                                   int width, int latent_dim, int classes, Rng& rng);
  static ImageEncoderParams bind(const ParameterStore& store, const std::string& prefix);
  int latent_dim() const { return fc2_bias.dim(0); }
};

// Single affine map -> 1 followed by a sigmoid.
struct TcpRegressorParams {
  ad::Var weight;  // [in, 1]
  ad::Var bias;    // [1]

  static TcpRegressorParams create(ParameterStore& store, const std::string& prefix, int input_dim, Rng& rng);
  static TcpRegressorParams bind(const ParameterStore& store, const std::string& prefix);
};

struct UnimodalOutput {
  ad::Var latent;  // [N, latent_dim]
  ad::Var probs;   // [N, C]
};

UnimodalOutput unimodal_forward(const ad::Var& gated, const TabularEncoderParams& params);  // [N,d]
UnimodalOutput unimodal_forward(const ad::Var& gated, const ImageEncoderParams& params);    // [N,C,H,W]

// [N, ...] -> [N,1], the input is flattened per sample.
ad::Var estimate_tcp(const ad::Var& gated, const TcpRegressorParams& params);
// [N,C] -> [N,1]
ad::Var true_class_probability(const ad::Var& probs, std::span<const int> labels);
// Batch sum over samples and modalities of -log p^m[y].
ad::Var classification_loss(const std::vector<ad::Var>& probs, std::span<const int> labels);
// Batch sum of sum_m (tcp_hat^m - tcp^m)^2, plus cls_loss.
ad::Var confidence_loss(const std::vector<ad::Var>& tcp_hats, const std::vector<ad::Var>& tcps,
                        const ad::Var& cls_loss);

// Single-sample value forms.
struct ConfidenceRecord {
  std::vector<double> probs;
  double tcp = 0.0;
  double tcp_hat = 0.0;
};

// -sum_m y . log p^m with probabilities floored at 1e-12. y must be one-hot.
double classification_loss(const std::vector<std::vector<double>>& probs_per_modality, std::span<const double> y);
double true_class_probability(std::span<const double> y, std::span<const double> p);
double confidence_loss(const std::vector<ConfidenceRecord>& records, double cls_loss);

struct CalibrationStats {
  double mae = 0.0;
  double mean_tcp = 0.0;
  double max_abs_error = 0.0;
};
CalibrationStats tcp_calibration_stats(std::span<const double> tcps, std::span<const double> tcp_hats);

// Index of the single 1 in a one-hot vector; throws otherwise.
int one_hot_index(std::span<const double> y);

}  // namespace mmdyn
