#include "mmdyn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mmdyn/confidence.hpp"
#include "mmdyn/error.hpp"
#include "mmdyn/evaluation.hpp"

namespace mmdyn {

using nlohmann::json;

AdamOptimizer::AdamOptimizer(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
}

void AdamOptimizer::step(ParameterStore& params) {
  const auto& entries = params.entries();
  if (m_.empty()) {
    for (const auto& [_, v] : entries) {
      m_.emplace_back(v.size(), 0.0);
      v_.emplace_back(v.size(), 0.0);
    }
  }
  if (m_.size() != entries.size()) throw Error("optimizer state does not match parameter layout");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < entries.size(); ++p) {
    ad::Var v = entries[p].second;
    auto grad = v.grad();
    if (grad.size() != v.size()) continue;
    auto value = v.mutable_value();
    auto& m = m_[p];
    auto& s = v_[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
      s[i] = beta2_ * s[i] + (1.0 - beta2_) * grad[i] * grad[i];
      value[i] -= lr_ * (m[i] / c1) / (std::sqrt(s[i] / c2) + eps_);
    }
  }
}

namespace {

void check_split(const SplitSpec& split, const MultimodalDataset& dataset) {
  const int n = dataset.sample_count();
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (const auto* list : {&split.train_indices, &split.val_indices, &split.test_indices}) {
    for (int i : *list) {
      if (i < 0 || i >= n) throw ConfigError("split index " + std::to_string(i) + " out of range");
      if (seen[static_cast<std::size_t>(i)]++) throw ConfigError("split index " + std::to_string(i) + " appears twice");
    }
  }
  if (split.train_indices.empty()) throw ConfigError("split has no training samples");
}

struct StepLosses {
  double l1 = 0.0, conf = 0.0, final = 0.0, total = 0.0;
};

// One optimization target: returns per-batch sums and the scalar to
// differentiate, plus fused probabilities for validation.
struct Objective {
  ad::Var total;
  StepLosses sums;
  ad::Var probs;
};

Objective evaluate_objective(const MultimodalModel& model, const Batch& batch, const ForwardOptions& options) {
  Objective o;
  if (model.spec().kind == ModelKind::early_fusion) {
    auto [probs, nll] = model.forward_early_fusion(batch);
    o.total = nll;
    o.probs = probs;
    o.sums.final = o.sums.total = nll.item();
    return o;
  }
  ForwardResult r = model.forward(batch, options);
  o.total = r.total;
  o.probs = r.final_probs;
  o.sums = {r.l1.item(), r.conf.item(), r.final.item(), r.total.item()};
  return o;
}

void throw_if_diverged(int epoch, const StepLosses& s) {
  if (std::isfinite(s.total) && std::isfinite(s.l1) && std::isfinite(s.conf) && std::isfinite(s.final)) return;
  std::ostringstream os;
  os << "training diverged at epoch " << epoch << ": l1=" << s.l1 << " conf=" << s.conf << " final=" << s.final
     << " total=" << s.total;
  throw TrainingError(os.str());
}

TrainedModel fit(const TrainConfig& config, const MultimodalDataset& dataset, const SplitSpec& split, ModelSpec spec) {
  config.validate();
  dataset.validate();
  check_split(split, dataset);

  TrainedModel out{config, MultimodalModel::create(spec, config.seed), fit_standardizers(dataset, split.train_indices), 0,
                   {}};
  const ForwardOptions options = ForwardOptions::from_config(config, dataset.modalities.size());
  const BatchBuilder builder(dataset, out.standardizers);
  MultimodalModel& model = out.model;
  AdamOptimizer optimizer(config.learning_rate);
  Rng shuffle_rng = make_rng(config.seed, "shuffle");

  ParameterStore best = model.params();
  double best_score = -1.0;
  std::vector<int> order = split.train_indices;
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), shuffle_rng);
    StepLosses train_sum;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      const Batch batch = builder.build(std::span<const int>(order.data() + start, stop - start));
      Objective o = evaluate_objective(model, batch, options);
      throw_if_diverged(epoch, o.sums);
      model.params().zero_grad();
      ad::backward(ad::scale(o.total, 1.0 / static_cast<double>(stop - start)));
      optimizer.step(model.params());
      train_sum.l1 += o.sums.l1;
      train_sum.conf += o.sums.conf;
      train_sum.final += o.sums.final;
      train_sum.total += o.sums.total;
    }

    EpochRecord record;
    const double n_train = static_cast<double>(order.size());
    record.train = {train_sum.l1 / n_train, train_sum.conf / n_train, train_sum.final / n_train,
                    train_sum.total / n_train};

    if (!split.val_indices.empty()) {
      ad::NoGradGuard guard;
      StepLosses val_sum;
      std::vector<int> predictions, labels;
      const auto& val = split.val_indices;
      for (std::size_t start = 0; start < val.size(); start += 256) {
        const std::size_t stop = std::min(val.size(), start + 256);
        const Batch batch = builder.build(std::span<const int>(val.data() + start, stop - start));
        Objective o = evaluate_objective(model, batch, options);
        val_sum.l1 += o.sums.l1;
        val_sum.conf += o.sums.conf;
        val_sum.final += o.sums.final;
        val_sum.total += o.sums.total;
        const int classes = o.probs.dim(1);
        const auto p = o.probs.value();
        for (std::size_t r = 0; r < batch.labels.size(); ++r) {
          predictions.push_back(argmax(p.subspan(r * static_cast<std::size_t>(classes), static_cast<std::size_t>(classes))));
          labels.push_back(batch.labels[r]);
        }
      }
      const double n_val = static_cast<double>(val.size());
      record.val = {val_sum.l1 / n_val, val_sum.conf / n_val, val_sum.final / n_val, val_sum.total / n_val};
      record.val_balanced_accuracy = compute_metrics(predictions, labels, dataset.class_count).balanced_accuracy;
    }
    // Ties go to the later epoch. Without validation data the last epoch is kept.
    const double score = split.val_indices.empty() ? static_cast<double>(epoch) : record.val_balanced_accuracy;
    if (score >= best_score) {
      best_score = score;
      best.assign(model.params());
      out.best_epoch = epoch;
    }
    out.history.push_back(record);
  }
  model.params().assign(best);
  return out;
}

}  // namespace

TrainedModel train(const TrainConfig& config, const MultimodalDataset& dataset, const SplitSpec& split) {
  if (config.early_fusion_baseline) return train_early_fusion_baseline(dataset, split, config);
  TrainConfig resolved = config;
  return fit(resolved, dataset, split, make_model_spec(resolved, dataset));
}

TrainedModel train_early_fusion_baseline(const MultimodalDataset& dataset, const SplitSpec& split,
                                         const TrainConfig& config) {
  TrainConfig resolved = config;
  resolved.early_fusion_baseline = true;
  return fit(resolved, dataset, split, make_model_spec(resolved, dataset));
}

json to_json(const EpochRecord& r) {
  auto losses = [](const LossBreakdown& b) {
    return json{{"l1", b.l1}, {"conf", b.conf}, {"final", b.final}, {"total", b.total}};
  };
  return {{"train", losses(r.train)}, {"val", losses(r.val)}, {"val_balanced_accuracy", r.val_balanced_accuracy}};
}

json to_json(const std::vector<EpochRecord>& history) {
  json a = json::array();
  for (const auto& r : history) a.push_back(to_json(r));
  return a;
}

}  // namespace mmdyn
