#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmdyn/error.hpp"
#include "mmdyn/evaluation.hpp"

using namespace mmdyn;

namespace {

// Second implementation straight from the confusion matrix.
Metrics confusion_oracle(const std::vector<int>& pred, const std::vector<int>& y, int c) {
  std::vector<std::vector<long>> cm(static_cast<std::size_t>(c), std::vector<long>(static_cast<std::size_t>(c), 0));
  for (std::size_t i = 0; i < y.size(); ++i) ++cm[static_cast<std::size_t>(y[i])][static_cast<std::size_t>(pred[i])];
  const double n = static_cast<double>(y.size());
  Metrics m;
  long trace = 0;
  for (int k = 0; k < c; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    long row = 0, col = 0;
    for (int j = 0; j < c; ++j) {
      row += cm[ks][static_cast<std::size_t>(j)];
      col += cm[static_cast<std::size_t>(j)][ks];
    }
    const long tp = cm[ks][ks];
    trace += tp;
    const double rec = row == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(row);
    const double prec = col == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(col);
    const double f1 = prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
    const double w = static_cast<double>(row) / n;
    m.f1_weighted += w * f1;
    m.recall_weighted += w * rec;
    m.precision_weighted += w * prec;
    m.f1_macro += f1;
    m.balanced_accuracy += rec;
  }
  m.f1_macro /= c;
  m.balanced_accuracy /= c;
  m.accuracy = static_cast<double>(trace) / n;
  return m;
}

SyntheticResult constant_image_toy() {
  SyntheticSpec s;
  s.sample_count = 120;
  s.class_count = 2;
  s.patient_count = 3;
  SyntheticModalitySpec t;
  t.name = "t";
  t.features = 6;
  t.planted_count = 2;
  SyntheticModalitySpec img;
  img.name = "img";
  img.kind = ModalityKind::image;
  img.height = 8;
  img.width = 8;
  img.patch = {0, 0, 4, 4};
  img.informative_fraction = 0.0;
  s.image_noise = 0.0;
  s.modalities = {t, img};
  return synthesize_dataset(s, 3);
}

}  // namespace

TEST_CASE("metric worked examples") {
  const std::vector<int> y{0, 0, 0, 1};
  const Metrics perfect = compute_metrics(y, y, 2);
  for (double v : perfect.as_vector()) CHECK(v == 1.0);
  const Metrics m = compute_metrics(std::vector<int>{0, 0, 0, 0}, y, 2);
  CHECK(m.accuracy == 0.75);
  CHECK(m.balanced_accuracy == 0.5);
  CHECK(m.recall_weighted == 0.75);
  CHECK(m.precision_weighted == doctest::Approx(0.5625));
  // Class 2 never occurs but still counts in the macro denominator.
  const Metrics absent = compute_metrics(y, y, 3);
  CHECK(absent.balanced_accuracy == doctest::Approx(2.0 / 3));
  CHECK(absent.f1_macro == doctest::Approx(2.0 / 3));
  CHECK(absent.f1_weighted == 1.0);
  CHECK_THROWS_AS(compute_metrics(std::vector<int>{}, std::vector<int>{}, 2), ConfigError);
  CHECK_THROWS_AS(compute_metrics(std::vector<int>{0, 2}, std::vector<int>{0, 1}, 2), ConfigError);
  CHECK_THROWS_AS(compute_metrics(std::vector<int>{0}, std::vector<int>{0, 1}, 2), ConfigError);
}

TEST_CASE("metrics equal the confusion-matrix oracle and satisfy their identities") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng = make_rng(seed, "metrics-property");
    const int c = 2 + static_cast<int>(uniform_index(rng, 5));
    std::vector<int> y(200), p(200);
    for (std::size_t i = 0; i < 200; ++i) {
      y[i] = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(c)));
      p[i] = uniform01(rng) < 0.6 ? y[i] : static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(c)));
    }
    const Metrics m = compute_metrics(p, y, c);
    CHECK(m == confusion_oracle(p, y, c));
    CHECK(m.recall_weighted == doctest::Approx(m.accuracy).epsilon(1e-12));
    for (double v : m.as_vector()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }

    // Consistent relabelling leaves macro and accuracy metrics unchanged.
    std::vector<int> perm(static_cast<std::size_t>(c));
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> y2(200), p2(200);
    for (std::size_t i = 0; i < 200; ++i) {
      y2[i] = perm[static_cast<std::size_t>(y[i])];
      p2[i] = perm[static_cast<std::size_t>(p[i])];
    }
    const Metrics r = compute_metrics(p2, y2, c);
    CHECK(r.accuracy == m.accuracy);
    CHECK(r.balanced_accuracy == doctest::Approx(m.balanced_accuracy).epsilon(1e-12));
    CHECK(r.f1_macro == doctest::Approx(m.f1_macro).epsilon(1e-12));
  }
}

TEST_CASE("summaries use the sample standard deviation") {
  Metrics a, b;
  a.accuracy = 0.5;
  b.accuracy = 0.7;
  const MetricsSummary s = summarize({a, b});
  CHECK(s.runs == 2);
  CHECK(s.mean.accuracy == doctest::Approx(0.6));
  CHECK(s.stddev.accuracy == doctest::Approx(std::sqrt(0.02)));
  CHECK(summarize({a}).stddev.accuracy == 0.0);
  CHECK_THROWS_AS(summarize({}), ConfigError);
  const nlohmann::json j = to_json(s);
  CHECK(j["mean"]["accuracy"] == doctest::Approx(0.6));
}

TEST_CASE("report tables print percentages with two decimals") {
  Metrics a;
  a.f1_weighted = 0.91234;
  a.balanced_accuracy = 0.5;
  const std::string t = render_table("Variant", {{"FI", summarize({a, a})}});
  CHECK(t == "Variant,F1 Score,F1 macro,Recall,Precision,Accuracy,Balanced accuracy\n"
             "FI,91.23 ± 0.00,0.00 ± 0.00,0.00 ± 0.00,0.00 ± 0.00,0.00 ± 0.00,50.00 ± 0.00\n");
  CHECK(render_table("x", {}, '\t').find("x\tF1 Score") == 0);
}

TEST_CASE("TCP error curve worked examples") {
  const std::vector<double> xs{0.0, 0.5, 0.6, 0.61, 1.0};
  const TcpErrorCurve c = tcp_error_curve(std::vector<double>{0.5}, std::vector<double>{0.8}, xs);
  CHECK(c.fractions == std::vector<double>{1, 1, 1, 0, 0});
  const std::vector<double> same{0.2, 0.4, 0.9};
  const TcpErrorCurve eq = tcp_error_curve(same, same, std::vector<double>{0.0, 1e-9, 0.1});
  CHECK(eq.fractions == std::vector<double>{1, 0, 0});
  const TcpErrorCurve z = tcp_error_curve(std::vector<double>{0.0, 0.5}, std::vector<double>{0.3, 0.1}, xs);
  CHECK(z.excluded_zero_tcp == 1);
  CHECK(z.fractions[0] == 0.0);
  CHECK_THROWS_AS(tcp_error_curve(std::vector<double>{0.0}, std::vector<double>{0.1}, xs), ConfigError);
  CHECK_THROWS_AS(tcp_error_curve(std::vector<double>{}, std::vector<double>{}, xs), ConfigError);
  CHECK_THROWS_AS(tcp_error_curve(same, same, std::vector<double>{0.5, 0.1}), ConfigError);
}

TEST_CASE("TCP error curve matches a brute-force recount and never increases") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed, "curve-property");
    std::vector<double> tcp(300), hat(300), xs;
    for (std::size_t i = 0; i < 300; ++i) {
      tcp[i] = uniform01(rng) < 0.05 ? 0.0 : uniform01(rng);
      hat[i] = uniform01(rng);
    }
    for (int k = 0; k <= 40; ++k) xs.push_back(0.05 * k);
    const TcpErrorCurve c = tcp_error_curve(tcp, hat, xs);
    long zeros = std::count(tcp.begin(), tcp.end(), 0.0);
    CHECK(c.excluded_zero_tcp == zeros);
    for (std::size_t k = 0; k < xs.size(); ++k) {
      long hits = 0;
      for (std::size_t i = 0; i < 300; ++i)
        if (tcp[i] != 0.0 && xs[k] * tcp[i] + tcp[i] <= hat[i]) ++hits;
      CHECK(c.fractions[k] == static_cast<double>(hits) / static_cast<double>(300 - zeros));
      if (k > 0) CHECK(c.fractions[k] <= c.fractions[k - 1]);
    }
  }
}

TEST_CASE("mean informativeness map") {
  const InformativenessMap a{4, 8, std::vector<double>(32, 0.2)};
  const InformativenessMap b{4, 8, std::vector<double>(32, 0.6)};
  CHECK(mean_informativeness_map({a}).values == a.values);
  for (double v : mean_informativeness_map({a, b}).values) CHECK(v == doctest::Approx(0.4));
  CHECK(mean_informativeness_map({a, b}).block_constant());
  CHECK_THROWS_AS(mean_informativeness_map({}), ConfigError);
  CHECK_THROWS_AS(mean_informativeness_map({a, InformativenessMap{8, 4, std::vector<double>(32, 0.0)}}), ShapeError);
}

TEST_CASE("masking a constant image modality with its own constant is a no-op") {
  const SyntheticResult r = constant_image_toy();
  const SplitSpec split = patient_split(r.dataset, {"P2"}, 0.2, 1);
  for (double v : r.dataset.modality("img").data) REQUIRE(v == 128.0 / 255.0);
  TrainConfig c;
  c.epochs = 5;
  c.learning_rate = 1e-2;
  c.latent_dims = {{"t", 4}, {"img", 4}};
  const TrainedModel m = train(c, r.dataset, split);
  CHECK(evaluate_masked(m, r.dataset, split, "img", 128.0 / 255.0) == evaluate(m, r.dataset, split.test_indices));
  CHECK_THROWS_AS(evaluate_masked(m, r.dataset, split, "t"), ConfigError);
  CHECK_THROWS_AS(evaluate_masked(m, r.dataset, split, "nope"), ConfigError);

  const Inference inf = run_inference(m, r.dataset, split.test_indices);
  REQUIRE(inf.modalities.size() == 2);
  CHECK(inf.modalities[0].gates.size() == split.test_indices.size());
  CHECK(inf.modalities[1].maps.size() == split.test_indices.size());
  CHECK(mean_gates(inf.modalities[0]).size() == 6);
  CHECK_THROWS_AS(mean_gates(inf.modalities[1]), ConfigError);
  const auto records = confidence_records(m, inf);
  CHECK(records.size() == 2 * split.test_indices.size());
  CHECK(records[1]["modality"] == "img");
  for (const auto& rec : records) {
    CHECK(rec["tcp"].get<double>() >= 0.0);
    CHECK(rec["tcp_hat"].get<double>() <= 1.0);
  }

  MultimodalDataset other = r.dataset;
  other.modalities.pop_back();
  CHECK_THROWS_AS(run_inference(m, other, split.test_indices), ShapeError);
}
