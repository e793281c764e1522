#pragma once

// Single-point prompt encoder and a lightweight two-way mask decoder.

#include <cstdint>

#include "samihs/backbone.hpp"
#include "samihs/nn.hpp"

namespace samihs {

/// Foreground click in the original (pre-upsampling) slice frame.
struct PointPrompt {
  int x = 0;  // column
  int y = 0;  // row

  friend bool operator==(const PointPrompt&, const PointPrompt&) = default;
};

/// Random-Fourier positional encoding of normalized coordinates plus a
/// learned foreground embedding.
struct PromptEncoder {
  ag::Var gaussian;  // 2 x c/2, fixed buffer
  ag::Var fg_embed;  // 1 x c

  static PromptEncoder init(std::size_t channel_dim, std::uint64_t seed);

  /// Encoding at normalized coordinates (u = x/W, v = y/H in [0, 1]).
  Matrix positional(double u, double v) const;
  /// Encoding of every token center of a grid x grid raster.
  Matrix dense_positional(std::size_t grid) const;

  void collect(ParamList& params) const;           // prompt.fg_embed
  void collect_buffers(ParamList& buffers) const;  // prompt.pe_gaussian
};

/// 1 x c embedding of `p` in a height x width slice.
ag::Var encode_point_prompt(const PointPrompt& p, std::size_t height, std::size_t width,
                            const PromptEncoder& prompt);

struct DecoderConfig {
  std::size_t channel_dim = 32;
  std::size_t num_layers = 2;
  std::size_t num_heads = 1;
  std::size_t mlp_dim = 64;
  std::size_t upscale_channels = 16;
  /// Transposed-conv kernel and stride; token grid * factor = low-res side.
  std::size_t upscale_factor = 2;

  void validate() const;
};

struct DecoderLayer {
  nn::Attention token_to_image;
  nn::LayerNorm norm1;
  nn::Mlp mlp;
  nn::LayerNorm norm2;
  nn::Attention image_to_token;
  nn::LayerNorm norm3;
};

struct MaskDecoder {
  DecoderConfig config;
  ag::Var mask_token;  // 1 x c
  std::vector<DecoderLayer> layers;
  ag::Var upscale_weight;  // c x (factor^2 * upscale_channels)
  ag::Var upscale_bias;    // 1 x upscale_channels
  nn::Mlp hyper;           // c -> c -> upscale_channels
  ag::Var logit_bias;      // 1 x 1

  static MaskDecoder init(const DecoderConfig& config, std::uint64_t seed);
  void collect(ParamList& out) const;  // decoder.*
};

/// Row permutation taking (token, sub-pixel) rows of a transposed conv to
/// the raster of the (grid*factor)^2 output pixels.
std::vector<std::size_t> pixel_shuffle_index(std::size_t grid, std::size_t factor);

/// Low-resolution logits, (grid*factor) x (grid*factor).
ag::Var decode_mask(const ImageEmbedding& embedding, const ag::Var& prompt,
                    const MaskDecoder& decoder, const PromptEncoder& prompt_encoder);

struct MaskPrediction {
  Matrix low_res_logits;  // H/2 x W/2
  Matrix full_res_probs;  // H x W, sigmoid of the bilinear-upsampled logits
};

}  // namespace samihs
