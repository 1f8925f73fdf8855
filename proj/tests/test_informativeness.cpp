#include <doctest.h>

#include <cmath>
#include <set>

#include "mmdyn/error.hpp"
#include "mmdyn/informativeness.hpp"
#include "support.hpp"

using namespace mmdyn;
using mmdyn::testing::grad_of;
using mmdyn::testing::numeric_grad;
using mmdyn::testing::random_values;
using mmdyn::testing::relative_error;

namespace {

void zero_all(ParameterStore& store) {
  for (auto& [name, v] : store.entries()) {
    auto values = ad::Var(v).mutable_value();
    std::fill(values.begin(), values.end(), 0.0);
  }
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_CASE("zero parameters give gates of exactly one half") {
  Rng rng = make_rng(1, "test");
  ParameterStore store;
  const auto tab = TabularGateParams::create(store, "g/t", 5, rng);
  const auto img = ImageGateParams::create(store, "g/i", 2, rng);
  zero_all(store);
  const GateVector g = tabular_gate_forward(random_values(rng, 5, -10, 10), tab, "t");
  CHECK(g.modality == "t");
  for (double w : g.weights) CHECK(w == 0.5);
  const InformativenessMap m = image_gate_forward(random_values(rng, 8 * 12 * 2, 0, 1), 8, 12, 2, img);
  CHECK(m.height == 8);
  CHECK(m.width == 12);
  for (double w : m.values) CHECK(w == 0.5);
}

TEST_CASE("tabular gate equals sigmoid of one affine map") {
  Rng rng = make_rng(2, "test");
  ParameterStore store;
  const int d = 4;
  const auto p = TabularGateParams::create(store, "g", d, rng);
  const auto x = random_values(rng, d, -2, 2);
  const GateVector g = tabular_gate_forward(x, p);
  REQUIRE(g.weights.size() == static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    double z = p.bias.value()[static_cast<std::size_t>(j)];
    for (int i = 0; i < d; ++i) z += x[static_cast<std::size_t>(i)] * p.weight.value()[static_cast<std::size_t>(i * d + j)];
    CHECK(g.weights[static_cast<std::size_t>(j)] == doctest::Approx(sigmoid(z)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(tabular_gate_forward(random_values(rng, d + 1), p), ShapeError);
}

TEST_CASE("gate ranges and image map structure on random inputs") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = make_rng(seed, "gate-property");
    ParameterStore store;
    const auto tab = TabularGateParams::create(store, "t", 7, rng);
    const auto img = ImageGateParams::create(store, "i", 1, rng);
    for (double w : tabular_gate_forward(random_values(rng, 7, -5, 5), tab).weights) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
    }
    const InformativenessMap m = image_gate_forward(random_values(rng, 28 * 28, 0, 1), 28, 28, 1, img);
    REQUIRE(m.values.size() == 28u * 28u);
    CHECK(m.block_constant());
    const std::set<double> distinct(m.values.begin(), m.values.end());
    CHECK(distinct.size() <= 49);
    CHECK(m.grid().size() == 49);
    for (double w : m.values) {
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
    }
  }
}

TEST_CASE("single-sample image gate matches the batched form") {
  Rng rng = make_rng(3, "test");
  ParameterStore store;
  const auto p = ImageGateParams::create(store, "i", 3, rng);
  const int h = 8, w = 16, c = 3;
  const auto hwc = random_values(rng, static_cast<std::size_t>(h * w * c), 0, 1);
  std::vector<double> chw(hwc.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) chw[static_cast<std::size_t>((k * h + y) * w + x)] = hwc[static_cast<std::size_t>((y * w + x) * c + k)];
  const ImageGateOutput batched = image_gate(ad::constant({1, c, h, w}, chw), p);
  CHECK(batched.grid.shape() == ad::Shape{1, 1, 2, 4});
  const InformativenessMap single = image_gate_forward(hwc, h, w, c, p);
  for (std::size_t i = 0; i < single.values.size(); ++i) CHECK(single.values[i] == batched.map.value()[i]);
  CHECK_THROWS_AS(image_gate_forward(random_values(rng, 6 * 8), 6, 8, 1, ImageGateParams::create(store, "j", 1, rng)),
                  ShapeError);
}

TEST_CASE("apply_gate worked examples") {
  const std::vector<double> x{2, 4, 6};
  CHECK(apply_gate(std::span<const double>(x), std::vector<double>{0.5, 0, 1}) == std::vector<double>{1, 0, 6});
  CHECK(apply_gate(std::span<const double>(x), std::vector<double>{1, 1, 1}) == x);
  CHECK_THROWS_AS(apply_gate(std::span<const double>(x), std::vector<double>{1, 1}), ShapeError);

  InformativenessMap half{4, 4, std::vector<double>(16, 0.5)};
  const std::vector<double> img(32, 0.8);
  for (double v : apply_gate(img, 2, half)) CHECK(v == doctest::Approx(0.4));
  CHECK_THROWS_AS(apply_gate(img, 3, half), ShapeError);

  ad::Var xb = ad::constant({1, 2, 4, 4}, std::vector<double>(32, 1.0));
  std::vector<double> mask(16, 0.0);
  mask[5] = 0.25;
  ad::Var gated = apply_gate(xb, ad::constant({1, 1, 4, 4}, mask));
  CHECK(gated.value()[5] == 0.25);
  CHECK(gated.value()[16 + 5] == 0.25);
  CHECK(gated.value()[6] == 0.0);
}

TEST_CASE("L1 sparsity worked examples") {
  CHECK(l1_gate_loss(std::vector<GateVector>{{"a", {0.5, 0.5, 0.5}}}) == doctest::Approx(1.5));
  CHECK(l1_gate_loss(std::vector<GateVector>{{"a", {0.2}}, {"b", {0.3, 0.1}}}) == doctest::Approx(0.6));
  // Image maps count one value per 4x4 block, not per pixel.
  CHECK(l1_gate_loss(std::vector<InformativenessMap>{{8, 8, std::vector<double>(64, 0.25)}}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(l1_gate_loss(std::vector<GateVector>{}), ShapeError);
  ad::Var a = ad::constant({2, 2}, {0.1, 0.2, 0.3, 0.4});
  CHECK(l1_gate_loss({a, ad::constant({1}, {0.5})}).item() == doctest::Approx(1.5));
}

TEST_CASE("feature ranking orders by mean gate with index tie-breaks") {
  const std::vector<double> gates{0.1, 0.9, 0.5, 0.9, 0.0};
  const auto top = rank_features(gates, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].index == 1);
  CHECK(top[1].index == 3);
  CHECK(top[2].index == 2);
  CHECK(top[2].name == "f2");
  CHECK(top[0].mean_gate == 0.9);
  const auto named = rank_features(gates, 1, {"a", "b", "c", "d", "e"});
  CHECK(named[0].name == "b");
  CHECK(rank_features(gates, 0).empty());
  CHECK(rank_features(gates, 5).back().index == 4);
  CHECK_THROWS_AS(rank_features(gates, 6), ConfigError);
  CHECK_THROWS_AS(rank_features(gates, 2, {"x"}), ShapeError);
}

TEST_CASE("gate parameter gradients match finite differences") {
  Rng rng = make_rng(4, "test");
  ParameterStore store;
  const auto tab = TabularGateParams::create(store, "t", 3, rng);
  const auto img = ImageGateParams::create(store, "i", 2, rng);
  ad::Var xt = ad::constant({2, 3}, random_values(rng, 6));
  ad::Var xi = ad::constant({2, 2, 8, 8}, random_values(rng, 256, 0, 1));
  const auto wt = random_values(rng, 6);
  const auto wi = random_values(rng, 2 * 2 * 8 * 8);
  auto loss = [&] {
    ad::Var gt = apply_gate(xt, tabular_gate(xt, tab));
    ad::Var gi = apply_gate(xi, image_gate(xi, img).map);
    return ad::add(ad::add(ad::sum(ad::mul(gt, ad::constant({2, 3}, wt))), ad::sum(ad::mul(gi, ad::constant(gi.shape(), wi)))),
                   l1_gate_loss({tabular_gate(xt, tab), image_gate(xi, img).grid}));
  };
  for (const auto& [name, leaf] : store.entries()) {
    store.zero_grad();
    ad::backward(loss());
    INFO(name);
    CHECK(relative_error(grad_of(leaf), numeric_grad(leaf, [&] { return loss().item(); })) < 1e-5);
  }
}
