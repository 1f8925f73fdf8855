// Training configuration and its JSON form (flat keys mirroring the struct,
// with dotted-path overrides).
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmdyn/data.hpp"
#include "mmdyn/fusion.hpp"

namespace mmdyn {

enum class AblationVariant { none, fi, mi, both };

std::string to_string(AblationVariant v);
AblationVariant ablation_variant_from_string(const std::string& s);

struct TrainConfig {
  int epochs = 250;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  // Per modality name; modalities not listed use default_latent_dim().
  std::map<std::string, int> latent_dims;
  LossWeights loss_weights;
  FusionMode fusion_mode = FusionMode::dynamic;
  std::vector<double> static_weights;
  AblationVariant ablation_variant = AblationVariant::both;
  bool mask_image_at_test = false;
  bool early_fusion_baseline = false;

  // Run plumbing.
  std::string dataset;                     // dataset directory
  nlohmann::json synthetic;                // inline synthetic spec (used when dataset is empty)
  std::uint64_t data_seed = 0;             // seed for synthetic generation
  std::vector<std::string> test_patients;  // empty = last patient in sorted order
  double val_fraction = 0.2;
  std::uint64_t split_seed = 0;
  std::string mask_modality;  // empty = every image modality
  double mask_intensity = 0.5;

  void validate() const;
  int latent_dim_for(const ModalityView& modality) const;
};

// 35 for protein-like panels, 250 for RNA-like panels, 500 for images;
// other tabular modalities get 64.
int default_latent_dim(const ModalityView& modality);

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Applies "a.b.c=value" to a JSON document; value is parsed as JSON when
// possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace mmdyn
