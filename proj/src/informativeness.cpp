#include "mmdyn/informativeness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmdyn/error.hpp"

namespace mmdyn {

std::vector<double> InformativenessMap::grid() const {
  const int gh = height / kPatchSize, gw = width / kPatchSize;
  std::vector<double> g(static_cast<std::size_t>(gh) * gw);
  for (int r = 0; r < gh; ++r)
    for (int c = 0; c < gw; ++c) g[static_cast<std::size_t>(r) * gw + c] = at(r * kPatchSize, c * kPatchSize);
  return g;
}

bool InformativenessMap::block_constant() const {
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      if (at(r, c) != at(r - r % kPatchSize, c - c % kPatchSize)) return false;
  return true;
}

TabularGateParams TabularGateParams::create(ParameterStore& store, const std::string& prefix, int features,
                                            Rng& rng) {
  if (features < 1) throw ShapeError("tabular gate needs at least one feature");
  return {store.add_uniform(prefix + "/weight", {features, features}, features, rng),
          store.add_uniform(prefix + "/bias", {features}, features, rng)};
}

TabularGateParams TabularGateParams::bind(const ParameterStore& store, const std::string& prefix) {
  return {store.get(prefix + "/weight"), store.get(prefix + "/bias")};
}

ImageGateParams ImageGateParams::create(ParameterStore& store, const std::string& prefix, int channels, Rng& rng) {
  constexpr int s1 = kStage1Channels, s2 = kStage2Channels;
  ImageGateParams p;
  p.conv1_weight = store.add_uniform(prefix + "/conv1_weight", {s1, channels, 3, 3}, channels * 9, rng);
  p.conv1_bias = store.add_uniform(prefix + "/conv1_bias", {s1}, channels * 9, rng);
  p.conv2_weight = store.add_uniform(prefix + "/conv2_weight", {s2, s1, 3, 3}, s1 * 9, rng);
  p.conv2_bias = store.add_uniform(prefix + "/conv2_bias", {s2}, s1 * 9, rng);
  p.decoder_weight = store.add_uniform(prefix + "/decoder_weight", {1, s1 + s2, 3, 3}, (s1 + s2) * 9, rng);
  p.decoder_bias = store.add_uniform(prefix + "/decoder_bias", {1}, (s1 + s2) * 9, rng);
  return p;
}

ImageGateParams ImageGateParams::bind(const ParameterStore& store, const std::string& prefix) {
  ImageGateParams p;
  p.conv1_weight = store.get(prefix + "/conv1_weight");
  p.conv1_bias = store.get(prefix + "/conv1_bias");
  p.conv2_weight = store.get(prefix + "/conv2_weight");
  p.conv2_bias = store.get(prefix + "/conv2_bias");
  p.decoder_weight = store.get(prefix + "/decoder_weight");
  p.decoder_bias = store.get(prefix + "/decoder_bias");
  return p;
}

ad::Var tabular_gate(const ad::Var& x, const TabularGateParams& params) {
  if (x.shape().size() != 2 || x.dim(1) != params.features())
    throw ShapeError("tabular gate: input " + ad::shape_string(x.shape()) + " does not match " +
                     std::to_string(params.features()) + " features");
  return ad::sigmoid(ad::affine(x, params.weight, params.bias));
}

ImageGateOutput image_gate(const ad::Var& images, const ImageGateParams& params) {
  if (images.shape().size() != 4 || images.dim(1) != params.channels())
    throw ShapeError("image gate: input " + ad::shape_string(images.shape()) + " does not match " +
                     std::to_string(params.channels()) + " channels");
  if (images.dim(2) % kPatchSize != 0 || images.dim(3) % kPatchSize != 0)
    throw ShapeError("image gate: H and W must be divisible by 4, got " + ad::shape_string(images.shape()));
  ad::Var stage1 = ad::maxpool2(ad::relu(ad::conv3x3(images, params.conv1_weight, params.conv1_bias)));
  ad::Var stage2 = ad::maxpool2(ad::relu(ad::conv3x3(stage1, params.conv2_weight, params.conv2_bias)));
  ad::Var skip = ad::maxpool2(stage1);
  ad::Var logits = ad::conv3x3(ad::concat_channels({stage2, skip}), params.decoder_weight, params.decoder_bias);
  ImageGateOutput out;
  out.grid = ad::sigmoid(logits);
  out.map = ad::upsample_nearest(out.grid, kPatchSize);
  return out;
}

ad::Var apply_gate(const ad::Var& x, const ad::Var& gate) {
  if (x.shape() == gate.shape()) return ad::mul(x, gate);
  if (x.shape().size() == 4 && gate.shape().size() == 4 && gate.dim(1) == 1 && x.dim(0) == gate.dim(0) &&
      x.dim(2) == gate.dim(2) && x.dim(3) == gate.dim(3))
    return ad::mul_broadcast(x, gate);
  throw ShapeError("apply_gate: gate " + ad::shape_string(gate.shape()) + " does not match features " +
                   ad::shape_string(x.shape()));
}

ad::Var l1_gate_loss(const std::vector<ad::Var>& gates) {
  if (gates.empty()) throw ShapeError("l1_gate_loss: no gates");
  ad::Var total = ad::sum(ad::abs(gates.front()));
  for (std::size_t i = 1; i < gates.size(); ++i) total = ad::add(total, ad::sum(ad::abs(gates[i])));
  return total;
}

GateVector tabular_gate_forward(std::span<const double> x, const TabularGateParams& params,
                                const std::string& modality) {
  const int d = static_cast<int>(x.size());
  if (d != params.features())
    throw ShapeError("tabular gate: input length " + std::to_string(d) + " does not match " +
                     std::to_string(params.features()) + " features");
  ad::NoGradGuard guard;
  ad::Var out = tabular_gate(ad::constant({1, d}, {x.begin(), x.end()}), params);
  return {modality, {out.value().begin(), out.value().end()}};
}

InformativenessMap image_gate_forward(std::span<const double> image, int height, int width, int channels,
                                      const ImageGateParams& params) {
  if (image.size() != static_cast<std::size_t>(height) * width * channels)
    throw ShapeError("image gate: buffer size does not match H x W x C");
  if (height % kPatchSize != 0 || width % kPatchSize != 0)
    throw ShapeError("image gate: H and W must be divisible by 4");
  std::vector<double> chw(image.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        chw[(static_cast<std::size_t>(c) * height + y) * width + x] =
            image[(static_cast<std::size_t>(y) * width + x) * channels + c];
  ad::NoGradGuard guard;
  auto out = image_gate(ad::constant({1, channels, height, width}, std::move(chw)), params);
  return {height, width, {out.map.value().begin(), out.map.value().end()}};
}

std::vector<double> apply_gate(std::span<const double> x, std::span<const double> gate) {
  if (x.size() != gate.size()) throw ShapeError("apply_gate: length mismatch");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * gate[i];
  return out;
}

std::vector<double> apply_gate(std::span<const double> image, int channels, const InformativenessMap& map) {
  if (image.size() != map.values.size() * static_cast<std::size_t>(channels))
    throw ShapeError("apply_gate: image does not match informativeness map");
  std::vector<double> out(image.size());
  for (std::size_t p = 0; p < map.values.size(); ++p)
    for (int c = 0; c < channels; ++c) out[p * channels + c] = image[p * channels + c] * map.values[p];
  return out;
}

double l1_gate_loss(const std::vector<GateVector>& gates) {
  if (gates.empty()) throw ShapeError("l1_gate_loss: no gates");
  double total = 0.0;
  for (const auto& g : gates)
    for (double w : g.weights) total += std::abs(w);
  return total;
}

double l1_gate_loss(const std::vector<InformativenessMap>& maps) {
  if (maps.empty()) throw ShapeError("l1_gate_loss: no gates");
  double total = 0.0;
  for (const auto& m : maps)
    for (double w : m.grid()) total += std::abs(w);
  return total;
}

std::vector<RankedFeature> rank_features(std::span<const double> mean_gates, int k,
                                         const std::vector<std::string>& feature_names) {
  const int d = static_cast<int>(mean_gates.size());
  if (k < 0 || k > d) throw ConfigError("rank_features: k=" + std::to_string(k) + " exceeds " + std::to_string(d) +
                                        " features");
  if (!feature_names.empty() && static_cast<int>(feature_names.size()) != d)
    throw ShapeError("rank_features: feature name count mismatch");
  std::vector<int> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return mean_gates[static_cast<std::size_t>(a)] > mean_gates[static_cast<std::size_t>(b)]; });
  std::vector<RankedFeature> out;
  for (int i = 0; i < k; ++i) {
    const int idx = order[static_cast<std::size_t>(i)];
    out.push_back({idx, feature_names.empty() ? "f" + std::to_string(idx) : feature_names[static_cast<std::size_t>(idx)],
                   mean_gates[static_cast<std::size_t>(idx)]});
  }
  return out;
}

}  // namespace mmdyn
