#pragma once

// Parameter-refactoring adapters.
//
// One adapter sits in front of each attention block and one in front of each
// MLP block. All adapters at the same position share a single down/up
// projection pair; each layer owns its own scale (bottleneck width) and shift
// (token width) vectors:
//
//   out = ((in * W_down) .* R_l) * W_up + B_l + in
//
// with R_l and B_l broadcast over tokens. There is no nonlinearity.

#include <cstdint>
#include <optional>
#include <vector>

#include "samihs/nn.hpp"

namespace samihs {

struct AdapterConfig {
  std::size_t channel_dim = 0;     // token width c
  std::size_t bottleneck_dim = 0;  // c'
  std::size_t num_layers = 0;      // L
  bool enable_mha_adapter = true;
  bool enable_mlp_adapter = true;

  /// c' = max(1, c/4).
  static AdapterConfig with_default_bottleneck(std::size_t channel_dim, std::size_t num_layers);
  void validate() const;
  std::size_t enabled_positions() const {
    return static_cast<std::size_t>(enable_mha_adapter) +
           static_cast<std::size_t>(enable_mlp_adapter);
  }
};

enum class AdapterPosition { mha, mlp };

const char* position_name(AdapterPosition pos);

struct SharedProjection {
  ag::Var w_down;  // c x c'
  ag::Var w_up;    // c' x c
};

struct LayerFactors {
  ag::Var scale;  // R_l, 1 x c'
  ag::Var shift;  // B_l, 1 x c
};

/// Vectorized adapter forward on a graph node.
ag::Var pr_adapter_forward(const ag::Var& m_in, const SharedProjection& proj,
                           const LayerFactors& factors);
Matrix pr_adapter_forward(const Matrix& m_in, const SharedProjection& proj,
                          const LayerFactors& factors);

class PRAdapterBank {
 public:
  PRAdapterBank() = default;

  /// Projections ~ N(0, 1/fan_in); every R_l and B_l starts at zero so each
  /// adapter is an exact identity. Deterministic in `seed`.
  static PRAdapterBank init(const AdapterConfig& config, std::uint64_t seed);

  const AdapterConfig& config() const { return config_; }
  bool enabled(AdapterPosition pos) const;

  /// Throws ContractViolation when the position is disabled.
  const SharedProjection& projection(AdapterPosition pos) const;
  const LayerFactors& factors(AdapterPosition pos, std::size_t layer) const;

  /// Adapter at (pos, layer) applied to tokens; identity when `pos` is off.
  ag::Var apply(AdapterPosition pos, std::size_t layer, const ag::Var& tokens) const;

  /// Tensors in checkpoint order: adapter.{mha|mlp}.W_down, .W_up,
  /// adapter.{mha|mlp}.layer{l}.R, .B
  void collect(ParamList& out) const;

  /// Independent copy; the original and the clone share no storage.
  PRAdapterBank clone() const;

 private:
  AdapterConfig config_;
  std::optional<SharedProjection> mha_;
  std::optional<SharedProjection> mlp_;
  std::vector<LayerFactors> mha_factors_;
  std::vector<LayerFactors> mlp_factors_;
};

/// A*(c*c' + c'*c) + A*L*(c' + c), A = number of enabled positions.
std::size_t count_trainable_params(const PRAdapterBank& bank);
std::size_t count_trainable_params(const AdapterConfig& config);

}  // namespace samihs
