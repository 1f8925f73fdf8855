// Acceptance run: one PASS/FAIL line per criterion. Thresholds, tolerances and
// time budgets are pinned here; the process exits nonzero if any line fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "mmdyn/cli.hpp"
#include "mmdyn/evaluation.hpp"
#include "mmdyn/experiments.hpp"
#include "support.hpp"

using namespace mmdyn;
using mmdyn::testing::numeric_grad;
using mmdyn::testing::random_values;
using mmdyn::testing::relative_error;
namespace fs = std::filesystem;

namespace {

constexpr double kLossTol = 1e-9;
constexpr double kGradTol = 1e-4;
// Finite-difference step for the gradient suite. With 1e-5 one of the image
// points sits within a step of a relu/max-pool switch and the central
// difference straddles the kink; 1e-6 keeps truncation error far below tol.
constexpr double kFdStep = 1e-6;

int failures = 0;

void report(int id, bool pass, double seconds, double budget, const std::string& detail) {
  const bool ok = pass && seconds < budget;
  if (!ok) ++failures;
  std::printf("[%s] criterion %d: %s (%.2fs, budget %.0fs)\n", ok ? "PASS" : "FAIL", id, detail.c_str(), seconds,
              budget);
  std::fflush(stdout);
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// 1. Loss oracles.
void loss_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  const double uniform_loss = classification_loss({{0.25, 0.25, 0.25, 0.25}}, std::vector<double>{0, 0, 1, 0});
  ok &= std::abs(uniform_loss - std::log(4.0)) < kLossTol;

  Rng rng = make_rng(1, "acceptance/loss");
  double worst = 0.0;
  for (int set = 0; set < 100; ++set) {
    std::vector<ConfidenceRecord> records(1 + uniform_index(rng, 5));
    double gaps = 0.0;
    for (auto& r : records) {
      r.tcp = uniform01(rng);
      r.tcp_hat = uniform01(rng);
      gaps += (r.tcp_hat - r.tcp) * (r.tcp_hat - r.tcp);
    }
    const double cls = uniform(rng, 0, 20);
    worst = std::max(worst, std::abs(confidence_loss(records, cls) - cls - gaps));
  }
  ok &= worst < kLossTol;

  double worst_lin = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const double l1 = uniform(rng, 0, 10), conf = uniform(rng, 0, 10), fin = uniform(rng, 0, 10);
    const LossWeights a{uniform(rng, 0.1, 5), uniform(rng, 0.1, 5), uniform(rng, 0.1, 5)};
    const LossWeights b{uniform(rng, 0.1, 5), uniform(rng, 0.1, 5), uniform(rng, 0.1, 5)};
    const double s = uniform(rng, 0.1, 3);
    const LossWeights combo{a.lambda1 + s * b.lambda1, a.lambda2 + s * b.lambda2, a.lambda3 + s * b.lambda3};
    worst_lin = std::max(worst_lin, std::abs(total_loss(l1, conf, fin, combo) -
                                             (total_loss(l1, conf, fin, a) + s * total_loss(l1, conf, fin, b))));
  }
  ok &= worst_lin < kLossTol;
  report(1, ok, since(t0), 1,
         fmt("|L(uniform,4)-ln4|=%.1e, confidence identity err=%.1e, linearity err=%.1e", std::abs(uniform_loss - std::log(4.0)),
             worst, worst_lin));
}

// 2. Gradient suite.
void gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  MultimodalDataset d;
  d.class_count = 2;
  d.labels = {0, 1, 1, 0};
  d.patient_ids = {"A", "A", "B", "B"};
  Rng data_rng = make_rng(2, "acceptance/grad-data");
  d.modalities = {ModalityView::tabular("a", 4, 3, random_values(data_rng, 12)),
                  ModalityView::tabular("b", 4, 3, random_values(data_rng, 12))};
  TrainConfig c;
  c.latent_dims = {{"a", 2}, {"b", 2}};
  c.loss_weights = {0.7, 1.3, 0.9};
  const ModelSpec spec = make_model_spec(c, d);
  const ForwardOptions options = ForwardOptions::from_config(c, 2);
  const std::vector<int> all{0, 1, 2, 3};
  const BatchBuilder builder(d, fit_standardizers(d, all));
  const Batch batch = builder.build(all);

  double worst_model = 0.0;
  for (std::uint64_t point = 0; point < 25; ++point) {
    MultimodalModel model = MultimodalModel::create(spec, 100 + point);
    auto loss = [&] { return model.forward(batch, options).total; };
    model.params().zero_grad();
    ad::backward(loss());
    std::vector<double> analytic, numeric;
    for (const auto& [name, leaf] : model.params().entries()) {
      analytic.insert(analytic.end(), leaf.grad().begin(), leaf.grad().end());
      const auto g = numeric_grad(leaf, [&] { return loss().item(); }, kFdStep);
      numeric.insert(numeric.end(), g.begin(), g.end());
    }
    worst_model = std::max(worst_model, relative_error(analytic, numeric));
  }

  double worst_image = 0.0;
  for (std::uint64_t point = 0; point < 25; ++point) {
    Rng rng = make_rng(point, "acceptance/grad-image");
    ParameterStore store;
    const auto p = ImageGateParams::create(store, "gate", 1, rng);
    ad::Var x = ad::constant({2, 1, 8, 8}, random_values(rng, 128, 0, 1));
    const auto w = random_values(rng, 128);
    auto loss = [&] {
      const ImageGateOutput g = image_gate(x, p);
      return ad::add(ad::sum(ad::mul(apply_gate(x, g.map), ad::constant({2, 1, 8, 8}, w))), l1_gate_loss({g.grid}));
    };
    store.zero_grad();
    ad::backward(loss());
    std::vector<double> analytic, numeric;
    for (const auto& [name, leaf] : store.entries()) {
      analytic.insert(analytic.end(), leaf.grad().begin(), leaf.grad().end());
      const auto g = numeric_grad(leaf, [&] { return loss().item(); }, kFdStep);
      numeric.insert(numeric.end(), g.begin(), g.end());
    }
    worst_image = std::max(worst_image, relative_error(analytic, numeric));
  }
  report(2, worst_model < kGradTol && worst_image < kGradTol, since(t0), 30,
         fmt("max relative error over 25 points: end-to-end %.2e, image gate %.2e (tol %.0e, step 1e-6)", worst_model,
             worst_image, kGradTol));
}

// 3. Structural invariants.
void structural_invariants() {
  const auto t0 = std::chrono::steady_clock::now();
  int constant_maps = 0;
  for (std::uint64_t draw = 0; draw < 100; ++draw) {
    Rng rng = make_rng(draw, "acceptance/blocks");
    ParameterStore store;
    const int ch = 1 + static_cast<int>(uniform_index(rng, 3));
    const auto p = ImageGateParams::create(store, "g", ch, rng);
    const InformativenessMap m = image_gate_forward(random_values(rng, 16 * 12 * static_cast<std::size_t>(ch), 0, 1), 16, 12, ch, p);
    constant_maps += m.block_constant();
  }

  int equal_fusions = 0;
  for (std::uint64_t draw = 0; draw < 100; ++draw) {
    Rng rng = make_rng(draw, "acceptance/fusion");
    std::vector<std::vector<double>> latents(3);
    std::vector<double> weights;
    for (auto& l : latents) {
      l = random_values(rng, 1 + uniform_index(rng, 6));
      weights.push_back(uniform01(rng));
    }
    std::vector<ad::Var> lv, hats;
    for (std::size_t m = 0; m < 3; ++m) {
      lv.push_back(ad::constant({1, static_cast<int>(latents[m].size())}, latents[m]));
      hats.push_back(ad::constant({1, 1}, {weights[m]}));
    }
    const ad::Var dyn = fuse_dynamic(lv, hats);
    const ad::Var fixed = fuse_static(lv, weights);
    equal_fusions += fuse_dynamic(latents, weights) == fuse_static(latents, weights) &&
                     std::equal(dyn.value().begin(), dyn.value().end(), fixed.value().begin());
  }

  int metric_matches = 0;
  for (std::uint64_t draw = 0; draw < 50; ++draw) {
    Rng rng = make_rng(draw, "acceptance/metrics");
    const int c = 2 + static_cast<int>(uniform_index(rng, 5));
    std::vector<int> y(200), p(200);
    for (std::size_t i = 0; i < 200; ++i) {
      y[i] = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(c)));
      p[i] = uniform01(rng) < 0.5 ? y[i] : static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(c)));
    }
    // Oracle from the confusion matrix.
    std::vector<std::vector<long>> cm(static_cast<std::size_t>(c), std::vector<long>(static_cast<std::size_t>(c), 0));
    for (std::size_t i = 0; i < 200; ++i) ++cm[static_cast<std::size_t>(y[i])][static_cast<std::size_t>(p[i])];
    Metrics o;
    long trace = 0;
    for (std::size_t k = 0; k < cm.size(); ++k) {
      long row = 0, col = 0;
      for (std::size_t j = 0; j < cm.size(); ++j) {
        row += cm[k][j];
        col += cm[j][k];
      }
      trace += cm[k][k];
      const double rec = row ? static_cast<double>(cm[k][k]) / static_cast<double>(row) : 0.0;
      const double prec = col ? static_cast<double>(cm[k][k]) / static_cast<double>(col) : 0.0;
      const double f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
      const double w = static_cast<double>(row) / 200.0;
      o.f1_weighted += w * f1;
      o.recall_weighted += w * rec;
      o.precision_weighted += w * prec;
      o.f1_macro += f1;
      o.balanced_accuracy += rec;
    }
    o.f1_macro /= c;
    o.balanced_accuracy /= c;
    o.accuracy = static_cast<double>(trace) / 200.0;
    metric_matches += compute_metrics(p, y, c) == o;
  }
  report(3, constant_maps == 100 && equal_fusions == 100 && metric_matches == 50, since(t0), 10,
         fmt("block-constant maps %.0f/100, exact fusion equivalence %.0f/100, exact metric matches %.0f/50",
             constant_maps, equal_fusions, metric_matches));
}

// 4. FI vs MI on imbalanced data, plus planted-feature recovery.
void class_imbalance() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticSpec s;
  s.sample_count = 2000;
  s.class_count = 4;
  s.class_ratios = {0.85, 0.07, 0.05, 0.03};
  s.patient_count = 5;
  s.noise = 1.0;
  s.separation = 2.5;
  for (const char* name : {"rna", "protein"}) {
    SyntheticModalitySpec m;
    m.name = name;
    m.features = 100;
    m.planted_count = 10;
    s.modalities.push_back(m);
  }
  const SyntheticResult data = synthesize_dataset(s, 7);
  const SplitSpec split = patient_split(data.dataset, {"P4"}, 0.2, 1);
  TrainConfig c;
  c.epochs = 100;
  c.learning_rate = 1e-2;
  c.latent_dims = {{"rna", 16}, {"protein", 16}};
  c.loss_weights = {0.1, 1.0, 1.0};

  double hits = 0.0, ranked = 0.0;
  const RunObserver observer = [&](const std::string& label, std::uint64_t, const TrainedModel& model, const Metrics&) {
    if (label != "FI") return;
    const Inference inf = run_inference(model, data.dataset, split.test_indices);
    for (std::size_t m = 0; m < 2; ++m) {
      const auto& planted = data.truth.planted_features.at(data.dataset.modalities[m].name);
      for (const auto& r : rank_features(mean_gates(inf.modalities[m]), 10))
        hits += std::count(planted.begin(), planted.end(), r.index);
      ranked += 10;
    }
  };
  const ExperimentReport rep =
      run_ablation(c, data.dataset, split, {AblationVariant::fi, AblationVariant::mi}, {1, 2, 3, 4, 5}, observer);
  const double fi = rep.row("FI").summary.mean.balanced_accuracy;
  const double mi = rep.row("MI").summary.mean.balanced_accuracy;
  const double precision = hits / ranked;
  report(4, fi >= mi && precision >= 0.8, since(t0), 600,
         fmt("balanced accuracy FI %.4f vs MI %.4f; top-10 planted precision %.3f (min 0.8)", fi, mi, precision));
}

// 5. Per-sample modality informativeness through tcp_hat.
void modality_informativeness() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticSpec s;
  s.sample_count = 1200;
  s.class_count = 3;
  s.patient_count = 4;
  s.noise = 1.0;
  s.separation = 3.0;
  s.assignment = InformativeAssignment::exclusive;
  for (const char* name : {"a", "b"}) {
    SyntheticModalitySpec m;
    m.name = name;
    m.features = 20;
    m.planted_count = 6;
    m.informative_fraction = 0.5;
    s.modalities.push_back(m);
  }
  const SyntheticResult data = synthesize_dataset(s, 3);
  const SplitSpec split = patient_split(data.dataset, {"P3"}, 0.2, 1);
  TrainConfig c;
  c.epochs = 60;
  c.learning_rate = 1e-2;
  c.seed = 1;
  c.latent_dims = {{"a", 16}, {"b", 16}};
  const TrainedModel model = train(c, data.dataset, split);
  const Inference inf = run_inference(model, data.dataset, split.test_indices);
  int good = 0, total = 0;
  for (std::size_t i = 0; i < inf.indices.size(); ++i) {
    const auto& informative = data.truth.informative_modalities[static_cast<std::size_t>(inf.indices[i])];
    if (informative.size() != 1) continue;
    const std::size_t k = informative[0] == "a" ? 0 : 1;
    ++total;
    good += inf.modalities[k].tcp_hat[i] > inf.modalities[1 - k].tcp_hat[i];
  }
  const double frac = static_cast<double>(good) / total;
  report(5, frac >= 0.6, since(t0), 600,
         fmt("informative modality has the higher tcp_hat for %.3f of %.0f test samples (min 0.6)", frac, total));
}

// 6. Masking the image modality at test time.
void masking() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticSpec s;
  s.sample_count = 900;
  s.class_count = 3;
  s.patient_count = 4;
  s.noise = 1.0;
  s.separation = 2.0;
  s.image_noise = 0.1;
  for (const char* name : {"a", "b"}) {
    SyntheticModalitySpec m;
    m.name = name;
    m.features = 20;
    m.planted_count = 4;
    s.modalities.push_back(m);
  }
  SyntheticModalitySpec img;
  img.name = "img";
  img.kind = ModalityKind::image;
  img.height = 16;
  img.width = 16;
  img.patch = {4, 4, 8, 8};
  s.modalities.push_back(img);
  const SyntheticResult data = synthesize_dataset(s, 3);
  const SplitSpec split = patient_split(data.dataset, {"P3"}, 0.2, 1);

  int drops = 0, brighter_patch = 0;
  std::ostringstream deltas;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TrainConfig c;
    c.epochs = 40;
    c.learning_rate = 1e-3;
    c.seed = seed;
    c.latent_dims = {{"a", 16}, {"b", 16}, {"img", 16}};
    c.loss_weights = {0.01, 1.0, 1.0};
    const TrainedModel model = train(c, data.dataset, split);
    const double plain = evaluate(model, data.dataset, split.test_indices).balanced_accuracy;
    const double masked = evaluate_masked(model, data.dataset, split, "img", 0.5).balanced_accuracy;
    drops += plain - masked > 0.0;
    deltas << (seed > 1 ? "," : "") << fmt("%.3f", plain - masked);

    const Inference inf = run_inference(model, data.dataset, split.test_indices);
    const InformativenessMap mean = mean_informativeness_map(inf.modalities[2].maps);
    double in = 0, out = 0;
    int n_in = 0, n_out = 0;
    for (int r = 0; r < 16; ++r)
      for (int q = 0; q < 16; ++q) {
        const bool inside = img.patch.contains(r, q);
        (inside ? in : out) += mean.at(r, q);
        ++(inside ? n_in : n_out);
      }
    brighter_patch += in / n_in > out / n_out;
  }
  report(6, drops >= 4, since(t0), 900,
         "balanced accuracy drop when masked in " + std::to_string(drops) + "/5 seeds (min 4), drops [" + deltas.str() +
             "]; mean heat-map brighter inside the planted patch in " + std::to_string(brighter_patch) + "/5");
}

// 7. TCP curve against a brute-force recount.
void tcp_curve() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng = make_rng(7, "acceptance/curve");
  std::vector<double> tcp(1000), hat(1000), xs;
  for (std::size_t i = 0; i < 1000; ++i) {
    tcp[i] = uniform01(rng) < 0.02 ? 0.0 : uniform01(rng);
    hat[i] = uniform01(rng);
  }
  // A few exact boundary cases: tcp_hat == (1 + x) * tcp at x = 0.
  for (std::size_t i = 0; i < 10; ++i) hat[i] = tcp[i];
  for (int k = 0; k <= 50; ++k) xs.push_back(0.04 * k);
  const TcpErrorCurve curve = tcp_error_curve(tcp, hat, xs);
  int exact = 0, monotone = 1;
  long kept = 0;
  for (double t : tcp) kept += t != 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    long count = 0;
    for (std::size_t i = 0; i < tcp.size(); ++i)
      if (tcp[i] != 0.0 && xs[k] * tcp[i] + tcp[i] <= hat[i]) ++count;
    exact += curve.fractions[k] == static_cast<double>(count) / static_cast<double>(kept);
    if (k > 0 && curve.fractions[k] > curve.fractions[k - 1]) monotone = 0;
  }
  const bool excluded_ok = curve.excluded_zero_tcp == static_cast<int>(1000 - kept);
  report(7, exact == static_cast<int>(xs.size()) && monotone && excluded_ok, since(t0), 1,
         fmt("exact at %.0f/%.0f thresholds, monotone=%.0f", exact, static_cast<double>(xs.size()), monotone));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 8. Bit-identical reruns through the command line.
void reproducibility() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = fs::temp_directory_path() / "mmdyn_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << R"({
    "epochs": 50, "learning_rate": 0.01, "seed": 3, "data_seed": 1,
    "latent_dims": {"rna": 8, "img": 8},
    "loss_weights": {"lambda1": 0.01, "lambda2": 1, "lambda3": 1},
    "synthetic": {"sample_count": 150, "class_count": 3, "patient_count": 3,
      "modalities": [{"name": "rna", "kind": "tabular", "features": 10, "planted_count": 3},
                     {"name": "img", "kind": "image", "height": 8, "width": 8, "channels": 1,
                      "patch": {"row": 0, "col": 4, "height": 4, "width": 4}}]}})";
  std::ostringstream out, err;
  const int a = cli::dispatch({"train", "-c", (dir / "config.json").string(), "-o", (dir / "a").string()}, out, err);
  const int b = cli::dispatch({"train", "-c", (dir / "a" / "run.json").string(), "-o", (dir / "b").string()}, out, err);
  const bool same_history = slurp(dir / "a" / "history.json") == slurp(dir / "b" / "history.json");
  const bool same_ckpt = slurp(dir / "a" / "model.ckpt") == slurp(dir / "b" / "model.ckpt");
  const bool nonempty = fs::file_size(dir / "a" / "model.ckpt") > 0;
  report(8, a == 0 && b == 0 && same_history && same_ckpt && nonempty, since(t0), 120,
         std::string("50-epoch rerun from run.json: history ") + (same_history ? "identical" : "differs") +
             ", checkpoint " + (same_ckpt ? "identical" : "differs") + (err.str().empty() ? "" : "; " + err.str()));
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{loss_oracles,    gradient_suite, structural_invariants,
                                                    class_imbalance, modality_informativeness, masking,
                                                    tcp_curve,       reproducibility};
  for (const auto& run : criteria) {
    try {
      run();
    } catch (const std::exception& e) {
      ++failures;
      std::printf("[FAIL] criterion raised: %s\n", e.what());
    }
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
