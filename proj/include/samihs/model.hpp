#pragma once

// Full point-prompted segmentation model and its freeze policy: the image
// encoder is frozen; adapters, prompt encoder and mask decoder train.

#include <cstdint>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "samihs/adapter.hpp"
#include "samihs/backbone.hpp"
#include "samihs/container.hpp"
#include "samihs/prompt_mask_head.hpp"

namespace samihs {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t bottleneck_dim = 0;  // 0 -> max(1, c/4)
  bool enable_mha_adapter = true;
  bool enable_mlp_adapter = true;
  std::size_t decoder_layers = 2;
  std::size_t decoder_heads = 1;
  std::size_t decoder_mlp_dim = 0;    // 0 -> 2c
  std::size_t upscale_channels = 0;   // 0 -> max(1, c/2)

  /// Throws ConfigError. Requires patch_size % 4 == 0 so the decoder can
  /// reach the H/2 low-resolution grid.
  void validate() const;
  AdapterConfig adapter() const;
  DecoderConfig decoder() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct ParamReport {
  std::size_t encoder = 0;
  std::size_t adapter = 0;
  std::size_t prompt = 0;
  std::size_t decoder = 0;
  std::size_t trainable = 0;
  std::size_t frozen = 0;

  std::size_t total() const { return trainable + frozen; }
  nlohmann::json to_json() const;
};

class Model {
 public:
  ImageEncoder encoder;
  PRAdapterBank bank;
  PromptEncoder prompt;
  MaskDecoder decoder;

  /// Random init (deterministic in `seed`) with the freeze policy applied.
  static Model build(const ModelConfig& config, std::uint64_t seed);

  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  /// Slice side the model accepts (H = W).
  std::size_t input_size() const { return config_.encoder.input_size(); }

  /// Learnable tensors in checkpoint order.
  ParamList parameters() const;
  /// Fixed non-learnable tensors (the prompt positional basis).
  ParamList buffers() const;
  ParamList trainable() const;
  ParamList frozen() const;
  ParamReport report() const;

  struct Output {
    ag::Var low_res_logits;  // H/2 x W/2
    ag::Var probs;           // H x W
  };
  Output forward(const Matrix& image, const PointPrompt& point) const;

 private:
  Model() = default;
  ModelConfig config_;
};

/// Eval-mode prediction.
MaskPrediction full_forward(const Matrix& image, const PointPrompt& point, const Model& model);

/// Checkpoint file: metadata = manifest (must carry "model": ModelConfig),
/// entries = every parameter (role trainable/frozen) and buffer.
NamedArrayFile export_checkpoint(const Model& model, nlohmann::json manifest);
/// Strict load: every model tensor present with the right shape.
void load_checkpoint_tensors(Model& model, const NamedArrayFile& file);
Model model_from_checkpoint(const NamedArrayFile& file);
/// Loads and wraps container failures as CheckpointError.
NamedArrayFile read_checkpoint(const std::filesystem::path& path);

struct ImportResult {
  std::vector<std::string> loaded;  // model tensor names that were overwritten
};

/// Copy tensors from an external container into `model`. `mapping` is a JSON
/// object {source_name: model_name | null}; null drops that source tensor.
/// Every other source entry must map to an existing model tensor of the same
/// shape; all offenders are reported in a single CheckpointError. Model
/// tensors nobody maps to keep their values.
ImportResult import_pretrained(Model& model, const NamedArrayFile& source,
                               const nlohmann::json& mapping);

/// Order-sensitive FNV-1a over shapes and raw bits of the given tensors.
std::uint64_t hash_tensors(const ParamList& params);

}  // namespace samihs
