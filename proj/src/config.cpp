#include "mmdyn/config.hpp"

#include <algorithm>

#include "mmdyn/error.hpp"

namespace mmdyn {

using nlohmann::json;

std::string to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::none: return "none";
    case AblationVariant::fi: return "FI";
    case AblationVariant::mi: return "MI";
    case AblationVariant::both: return "both";
  }
  return "both";
}

AblationVariant ablation_variant_from_string(const std::string& s) {
  if (s == "none") return AblationVariant::none;
  if (s == "FI" || s == "fi") return AblationVariant::fi;
  if (s == "MI" || s == "mi") return AblationVariant::mi;
  if (s == "both") return AblationVariant::both;
  throw ConfigError("unknown ablation variant '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  loss_weights.validate();
  for (const auto& [name, d] : latent_dims)
    if (d < 1) throw ConfigError("latent dim for '" + name + "' must be >= 1");
  for (double w : static_weights)
    if (!(w >= 0.0)) throw ConfigError("static weights must be nonnegative");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0,1)");
  if (!(mask_intensity >= 0.0 && mask_intensity <= 1.0)) throw ConfigError("mask_intensity must lie in [0,1]");
}

int default_latent_dim(const ModalityView& modality) {
  if (modality.kind == ModalityKind::image) return 500;
  std::string name = modality.name;
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  if (name.find("protein") != std::string::npos) return 35;
  if (name.find("rna") != std::string::npos) return 250;
  return 64;
}

int TrainConfig::latent_dim_for(const ModalityView& modality) const {
  auto it = latent_dims.find(modality.name);
  return it != latent_dims.end() ? it->second : default_latent_dim(modality);
}

json to_json(const TrainConfig& c) {
  return json{
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"seed", c.seed},
      {"latent_dims", c.latent_dims},
      {"loss_weights",
       {{"lambda1", c.loss_weights.lambda1}, {"lambda2", c.loss_weights.lambda2}, {"lambda3", c.loss_weights.lambda3}}},
      {"fusion", {{"mode", to_string(c.fusion_mode)}, {"static_weights", c.static_weights}}},
      {"ablation_variant", to_string(c.ablation_variant)},
      {"mask_image_at_test", c.mask_image_at_test},
      {"early_fusion_baseline", c.early_fusion_baseline},
      {"dataset", c.dataset},
      {"synthetic", c.synthetic},
      {"data_seed", c.data_seed},
      {"test_patients", c.test_patients},
      {"val_fraction", c.val_fraction},
      {"split_seed", c.split_seed},
      {"mask_modality", c.mask_modality},
      {"mask_intensity", c.mask_intensity},
  };
}

TrainConfig train_config_from_json(const json& j) {
  static const std::vector<std::string> known = {
      "epochs",        "batch_size",    "learning_rate",      "seed",       "latent_dims",
      "loss_weights",  "fusion",        "ablation_variant",   "mask_image_at_test",
      "early_fusion_baseline",          "dataset",            "synthetic",  "data_seed",
      "test_patients", "val_fraction",  "split_seed",         "mask_modality", "mask_intensity"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
  try {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    c.latent_dims = j.value("latent_dims", c.latent_dims);
    if (j.contains("loss_weights")) {
      const auto& lw = j.at("loss_weights");
      c.loss_weights.lambda1 = lw.value("lambda1", 1.0);
      c.loss_weights.lambda2 = lw.value("lambda2", 1.0);
      c.loss_weights.lambda3 = lw.value("lambda3", 1.0);
    }
    if (j.contains("fusion")) {
      const auto& f = j.at("fusion");
      c.fusion_mode = fusion_mode_from_string(f.value("mode", std::string("dynamic")));
      c.static_weights = f.value("static_weights", std::vector<double>{});
    }
    c.ablation_variant = ablation_variant_from_string(j.value("ablation_variant", std::string("both")));
    c.mask_image_at_test = j.value("mask_image_at_test", false);
    c.early_fusion_baseline = j.value("early_fusion_baseline", false);
    c.dataset = j.value("dataset", std::string{});
    c.synthetic = j.value("synthetic", json{});
    c.data_seed = j.value("data_seed", c.data_seed);
    c.test_patients = j.value("test_patients", std::vector<std::string>{});
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.split_seed = j.value("split_seed", c.split_seed);
    c.mask_modality = j.value("mask_modality", std::string{});
    c.mask_intensity = j.value("mask_intensity", c.mask_intensity);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key segment");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override '" + assignment + "' descends into a non-object");
      *node = json::object();
    }
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace mmdyn
