#include "mmdyn/model.hpp"

#include "mmdyn/confidence.hpp"
#include "mmdyn/error.hpp"

namespace mmdyn {

using nlohmann::json;

ModalityShape ModalityShape::of(const ModalityView& view) {
  ModalityShape s;
  s.name = view.name;
  s.kind = view.kind;
  s.features = view.features;
  s.height = view.height;
  s.width = view.width;
  s.channels = view.channels;
  s.feature_names = view.feature_names;
  return s;
}

ForwardOptions ForwardOptions::from_config(const TrainConfig& config, std::size_t modality_count) {
  ForwardOptions o;
  o.use_gates = config.ablation_variant == AblationVariant::fi || config.ablation_variant == AblationVariant::both;
  o.use_tcp = config.ablation_variant == AblationVariant::mi || config.ablation_variant == AblationVariant::both;
  o.fusion = config.fusion_mode;
  o.loss_weights = config.loss_weights;
  if (o.fusion == FusionMode::fixed) {
    o.use_tcp = false;
    FusionConfig fc{FusionMode::fixed, config.static_weights, {}};
    fc.validate(modality_count);
    o.static_weights = fc.weights_for(modality_count);
  }
  // Without gates the sparsity term vanishes, which equals lambda1 = 0.
  if (!o.use_gates) o.loss_weights.lambda1 = 0.0;
  return o;
}

std::vector<Standardizer> fit_standardizers(const MultimodalDataset& dataset, const std::vector<int>& indices) {
  std::vector<Standardizer> out;
  for (const auto& m : dataset.modalities)
    out.push_back(Standardizer::fit(m, indices));
  return out;
}

BatchBuilder::BatchBuilder(const MultimodalDataset& dataset, std::vector<Standardizer> standardizers)
    : dataset_(&dataset), standardizers_(std::move(standardizers)) {
  if (standardizers_.size() != dataset.modalities.size())
    throw ShapeError("batch builder: one standardizer slot per modality required");
}

Batch BatchBuilder::build(std::span<const int> indices) const {
  Batch b;
  const int n = static_cast<int>(indices.size());
  b.indices.assign(indices.begin(), indices.end());
  for (int i : indices) b.labels.push_back(dataset_->labels.at(static_cast<std::size_t>(i)));
  for (std::size_t m = 0; m < dataset_->modalities.size(); ++m) {
    const auto& view = dataset_->modalities[m];
    const int size = view.sample_size();
    std::vector<double> values(static_cast<std::size_t>(n) * size);
    if (view.kind == ModalityKind::tabular) {
      for (int r = 0; r < n; ++r) {
        std::span<const double> in(view.sample(indices[static_cast<std::size_t>(r)]), static_cast<std::size_t>(size));
        std::span<double> out(values.data() + static_cast<std::size_t>(r) * size, static_cast<std::size_t>(size));
        if (standardizers_[m].mean.empty()) {
          std::copy(in.begin(), in.end(), out.begin());
        } else {
          standardizers_[m].apply(in, out);
        }
      }
      b.inputs.push_back(ad::constant({n, size}, std::move(values)));
    } else {
      const int h = view.height, w = view.width, c = view.channels;
      std::vector<double> px(static_cast<std::size_t>(size));
      for (int r = 0; r < n; ++r) {
        std::span<const double> in(view.sample(indices[static_cast<std::size_t>(r)]), static_cast<std::size_t>(size));
        if (standardizers_[m].mean.empty()) {
          std::copy(in.begin(), in.end(), px.begin());
        } else {
          standardizers_[m].apply(in, px);
        }
        double* dst = values.data() + static_cast<std::size_t>(r) * size;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            for (int k = 0; k < c; ++k)
              dst[(static_cast<std::size_t>(k) * h + y) * w + x] = px[(static_cast<std::size_t>(y) * w + x) * c + k];
      }
      b.inputs.push_back(ad::constant({n, c, h, w}, std::move(values)));
    }
  }
  return b;
}

std::string module_prefix(const std::string& module, const std::string& modality) {
  return module + "/" + modality;
}

MultimodalModel::MultimodalModel(ModelSpec spec, ParameterStore params)
    : spec_(std::move(spec)), params_(std::move(params)) {}

MultimodalModel MultimodalModel::create(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.class_count < 2) throw ConfigError("model needs at least 2 classes");
  if (spec.modalities.empty()) throw ConfigError("model needs at least one modality");
  ParameterStore store;
  if (spec.kind == ModelKind::early_fusion) {
    int width = 0;
    for (const auto& m : spec.modalities) width += m.input_size();
    Rng rng = make_rng(seed, "init/early_fusion");
    store.add_uniform("early_fusion/weight", {width, spec.class_count}, width, rng);
    store.add_uniform("early_fusion/bias", {spec.class_count}, width, rng);
    return MultimodalModel(spec, std::move(store));
  }
  if (spec.latent_dims.size() != spec.modalities.size())
    throw ConfigError("one latent dim per modality required");
  int fused = 0;
  for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
    const auto& ms = spec.modalities[m];
    const int latent = spec.latent_dims[m];
    const std::string gate = module_prefix("gate", ms.name);
    const std::string enc = module_prefix("encoder", ms.name);
    const std::string tcp = module_prefix("tcp", ms.name);
    Rng gate_rng = make_rng(seed, "init/" + gate);
    Rng enc_rng = make_rng(seed, "init/" + enc);
    Rng tcp_rng = make_rng(seed, "init/" + tcp);
    if (ms.kind == ModalityKind::tabular) {
      TabularGateParams::create(store, gate, ms.features, gate_rng);
      TabularEncoderParams::create(store, enc, ms.features, latent, spec.class_count, enc_rng);
    } else {
      ImageGateParams::create(store, gate, ms.channels, gate_rng);
      ImageEncoderParams::create(store, enc, ms.channels, ms.height, ms.width, latent, spec.class_count, enc_rng);
    }
    TcpRegressorParams::create(store, tcp, ms.input_size(), tcp_rng);
    fused += latent;
  }
  Rng final_rng = make_rng(seed, "init/final");
  FinalClassifierParams::create(store, "final", fused, spec.class_count, final_rng);
  return MultimodalModel(spec, std::move(store));
}

ForwardResult MultimodalModel::forward(const Batch& batch, const ForwardOptions& options) const {
  if (spec_.kind != ModelKind::mm_dynamics) throw Error("forward: not a multimodal dynamics model");
  if (batch.inputs.size() != spec_.modalities.size()) throw ShapeError("forward: modality count mismatch");
  const int n = static_cast<int>(batch.labels.size());
  ForwardResult r;
  std::vector<ad::Var> gates, latents, probs, tcps, tcp_hats;
  for (std::size_t m = 0; m < spec_.modalities.size(); ++m) {
    const auto& ms = spec_.modalities[m];
    const ad::Var& x = batch.inputs[m];
    ModalityForward out;
    ad::Var gated = x;
    UnimodalOutput uni;
    if (ms.kind == ModalityKind::tabular) {
      if (options.use_gates) {
        out.gate = tabular_gate(x, TabularGateParams::bind(params_, module_prefix("gate", ms.name)));
        gated = apply_gate(x, out.gate);
      }
      uni = unimodal_forward(gated, TabularEncoderParams::bind(params_, module_prefix("encoder", ms.name)));
    } else {
      if (options.use_gates) {
        auto g = image_gate(x, ImageGateParams::bind(params_, module_prefix("gate", ms.name)));
        out.gate = g.grid;
        out.gate_map = g.map;
        gated = apply_gate(x, g.map);
      }
      uni = unimodal_forward(gated, ImageEncoderParams::bind(params_, module_prefix("encoder", ms.name)));
    }
    out.latent = uni.latent;
    out.probs = uni.probs;
    out.tcp = true_class_probability(uni.probs, batch.labels);
    out.tcp_hat = options.use_tcp
                      ? estimate_tcp(gated, TcpRegressorParams::bind(params_, module_prefix("tcp", ms.name)))
                      : ad::filled({n, 1}, 1.0);
    if (out.gate.defined()) gates.push_back(out.gate);
    latents.push_back(out.latent);
    probs.push_back(out.probs);
    tcps.push_back(out.tcp);
    tcp_hats.push_back(out.tcp_hat);
    r.modalities.push_back(std::move(out));
  }
  const ad::Var fused =
      options.fusion == FusionMode::dynamic ? fuse_dynamic(latents, tcp_hats) : fuse_static(latents, options.static_weights);
  r.final_probs = final_classifier_forward(fused, FinalClassifierParams::bind(params_, "final"));
  r.l1 = gates.empty() ? ad::filled({1}, 0.0) : l1_gate_loss(gates);
  const ad::Var cls = classification_loss(probs, batch.labels);
  r.conf = options.use_tcp ? confidence_loss(tcp_hats, tcps, cls) : cls;
  r.final = final_loss(r.final_probs, batch.labels);
  r.total = total_loss(r.l1, r.conf, r.final, options.loss_weights);
  return r;
}

std::pair<ad::Var, ad::Var> MultimodalModel::forward_early_fusion(const Batch& batch) const {
  if (spec_.kind != ModelKind::early_fusion) throw Error("forward_early_fusion: not an early-fusion model");
  const int n = static_cast<int>(batch.labels.size());
  std::vector<ad::Var> flat;
  for (const auto& x : batch.inputs)
    flat.push_back(x.shape().size() == 2 ? x : ad::reshape(x, {n, static_cast<int>(x.size()) / std::max(n, 1)}));
  ad::Var probs = ad::softmax(
      ad::affine(ad::concat_cols(flat), params_.get("early_fusion/weight"), params_.get("early_fusion/bias")));
  return {probs, ad::nll_sum(probs, batch.labels, kProbabilityFloor)};
}

json to_json(const ModelSpec& spec) {
  json mods = json::array();
  for (const auto& m : spec.modalities) {
    mods.push_back({{"name", m.name},
                    {"kind", to_string(m.kind)},
                    {"features", m.features},
                    {"height", m.height},
                    {"width", m.width},
                    {"channels", m.channels},
                    {"feature_names", m.feature_names}});
  }
  return {{"kind", spec.kind == ModelKind::mm_dynamics ? "mm_dynamics" : "early_fusion"},
          {"class_count", spec.class_count},
          {"latent_dims", spec.latent_dims},
          {"modalities", mods}};
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec spec;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "mm_dynamics") {
    spec.kind = ModelKind::mm_dynamics;
  } else if (kind == "early_fusion") {
    spec.kind = ModelKind::early_fusion;
  } else {
    throw DataError("unknown model kind '" + kind + "'");
  }
  spec.class_count = j.at("class_count").get<int>();
  spec.latent_dims = j.at("latent_dims").get<std::vector<int>>();
  for (const auto& mj : j.at("modalities")) {
    ModalityShape m;
    m.name = mj.at("name").get<std::string>();
    m.kind = modality_kind_from_string(mj.at("kind").get<std::string>());
    m.features = mj.at("features").get<int>();
    m.height = mj.at("height").get<int>();
    m.width = mj.at("width").get<int>();
    m.channels = mj.at("channels").get<int>();
    m.feature_names = mj.at("feature_names").get<std::vector<std::string>>();
    spec.modalities.push_back(std::move(m));
  }
  return spec;
}

ModelSpec make_model_spec(const TrainConfig& config, const MultimodalDataset& dataset) {
  ModelSpec spec;
  spec.kind = config.early_fusion_baseline ? ModelKind::early_fusion : ModelKind::mm_dynamics;
  spec.class_count = dataset.class_count;
  for (const auto& [name, _] : config.latent_dims) dataset.modality_index(name);
  for (const auto& m : dataset.modalities) {
    spec.modalities.push_back(ModalityShape::of(m));
    if (spec.kind == ModelKind::mm_dynamics) spec.latent_dims.push_back(config.latent_dim_for(m));
  }
  return spec;
}

}  // namespace mmdyn
