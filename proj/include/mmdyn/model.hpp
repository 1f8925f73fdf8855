// The assembled multimodal network: per-modality gate, unimodal classifier and
// TCP regressor, late fusion and the final classifier. Also holds the
// early-fusion linear comparator and batch assembly.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmdyn/autodiff.hpp"
#include "mmdyn/config.hpp"
#include "mmdyn/data.hpp"
#include "mmdyn/fusion.hpp"
#include "mmdyn/informativeness.hpp"
#include "mmdyn/parameters.hpp"

namespace mmdyn {

struct ModalityShape {
  std::string name;
  ModalityKind kind = ModalityKind::tabular;
  int features = 0;
  int height = 0, width = 0, channels = 0;
  std::vector<std::string> feature_names;

  static ModalityShape of(const ModalityView& view);
  // Flattened per-sample input width.
  int input_size() const { return kind == ModalityKind::tabular ? features : height * width * channels; }
  bool operator==(const ModalityShape&) const = default;
};

enum class ModelKind { mm_dynamics, early_fusion };

struct ModelSpec {
  ModelKind kind = ModelKind::mm_dynamics;
  int class_count = 0;
  std::vector<ModalityShape> modalities;
  std::vector<int> latent_dims;  // mm_dynamics only
};

// Which parts of the pipeline are active in a forward pass.
struct ForwardOptions {
  bool use_gates = true;   // feature informativeness
  bool use_tcp = true;     // modality informativeness (dynamic fusion + TCP regression term)
  FusionMode fusion = FusionMode::dynamic;
  std::vector<double> static_weights;  // resolved, one per modality, fixed mode
  LossWeights loss_weights;

  static ForwardOptions from_config(const TrainConfig& config, std::size_t modality_count);
};

// Per-modality standardized model inputs for a set of samples: tabular
// [B,d], image [B,C,H,W].
struct Batch {
  std::vector<ad::Var> inputs;
  std::vector<int> labels;
  std::vector<int> indices;
};

class BatchBuilder {
 public:
  BatchBuilder(const MultimodalDataset& dataset, std::vector<Standardizer> standardizers);
  Batch build(std::span<const int> indices) const;

 private:
  const MultimodalDataset* dataset_;
  std::vector<Standardizer> standardizers_;
};

// Standardizers fitted on `indices`: per column for tabular modalities, per
// channel for images.
std::vector<Standardizer> fit_standardizers(const MultimodalDataset& dataset, const std::vector<int>& indices);

struct ModalityForward {
  ad::Var gate;      // tabular [B,d]; image grid [B,1,H/4,W/4]; undefined when gates are off
  ad::Var gate_map;  // image [B,1,H,W]
  ad::Var latent;
  ad::Var probs;
  ad::Var tcp;      // [B,1]
  ad::Var tcp_hat;  // [B,1]
};

struct ForwardResult {
  std::vector<ModalityForward> modalities;
  ad::Var final_probs;
  // Batch sums.
  ad::Var l1;
  ad::Var conf;
  ad::Var final;
  ad::Var total;
};

class MultimodalModel {
 public:
  // Initializes every parameter block from named streams derived from `seed`.
  static MultimodalModel create(const ModelSpec& spec, std::uint64_t seed);
  MultimodalModel(ModelSpec spec, ParameterStore params);

  const ModelSpec& spec() const { return spec_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  ForwardResult forward(const Batch& batch, const ForwardOptions& options) const;
  // Early-fusion comparator: softmax over one affine map of the concatenated
  // flattened inputs. Returns probs and the batch-summed cross-entropy.
  std::pair<ad::Var, ad::Var> forward_early_fusion(const Batch& batch) const;

 private:
  ModelSpec spec_;
  ParameterStore params_;
};

std::string module_prefix(const std::string& module, const std::string& modality);

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);
ModelSpec make_model_spec(const TrainConfig& config, const MultimodalDataset& dataset);

}  // namespace mmdyn
