#pragma once

// Frozen vision-transformer image encoder with adapter attachment points.
//
// Shape chain for an H x W slice: bilinear 2x upsample to image_size x
// image_size (image_size = 2H), non-overlapping patch_size patches, L pre-norm
// blocks, then a linear+LayerNorm neck. Output is (image_size/patch_size)^2
// tokens of width channel_dim.

#include <cstdint>
#include <vector>

#include "samihs/adapter.hpp"
#include "samihs/nn.hpp"

namespace samihs {

struct EncoderConfig {
  std::size_t image_size = 32;  // side after upsampling
  std::size_t patch_size = 8;
  std::size_t channel_dim = 32;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t mlp_ratio = 4;
  /// 0 = global attention everywhere.
  std::size_t window_size = 0;
  /// Layers that use global attention even when window_size > 0.
  std::vector<std::size_t> global_layers;

  void validate() const;
  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_tokens() const { return grid() * grid(); }
  /// Side of the slice before upsampling.
  std::size_t input_size() const { return image_size / 2; }
  /// Window side used by `layer` (0 = global).
  std::size_t window_for(std::size_t layer) const;
};

/// Weights of one encoder block. Frozen under the fine-tuning policy.
struct TransformerBlockState {
  nn::LayerNorm ln1;
  nn::Attention attn;
  nn::LayerNorm ln2;
  nn::Mlp mlp;

  void collect(ParamList& out, const std::string& prefix) const;
};

struct ImageEncoder {
  EncoderConfig config;
  nn::Linear patch;  // patch_size^2 -> c
  ag::Var pos;       // num_tokens x c
  std::vector<TransformerBlockState> blocks;
  nn::Linear neck;
  nn::LayerNorm neck_norm;

  static ImageEncoder init(const EncoderConfig& config, std::uint64_t seed);
  /// encoder.patch.*, encoder.pos, encoder.block{l}.*, encoder.neck.*
  void collect(ParamList& out) const;
};

struct ImageEmbedding {
  ag::Var tokens;  // grid^2 x c
  std::size_t grid = 0;
};

/// Bilinear 2x upsampling (align-corners=false). Requires H, W >= 2.
Matrix upsample_input(const Matrix& x);

/// Non-overlapping patch flattening: row t = patch t in raster order,
/// column = pixel within the patch in raster order.
Matrix patchify(const Matrix& image, std::size_t patch_size);

/// Patch flattening, frozen linear projection, plus positional embedding.
ag::Var patch_embed(const Matrix& x_up, const ImageEncoder& encoder);

/// Row permutation that groups a grid x grid token raster into consecutive
/// window x window blocks (windows in raster order, tokens raster within).
std::vector<std::size_t> window_partition_index(std::size_t grid, std::size_t window);
std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm);

/// m' = MHA(PR_mha(LN1(m))) + m ; out = MLP(PR_mlp(LN2(m'))) + m'.
/// `bank` may be null for the adapter-free block.
ag::Var modified_block_forward(const ag::Var& m_prev, const TransformerBlockState& block,
                               const PRAdapterBank* bank, std::size_t layer_index,
                               const EncoderConfig& config);

/// upsample -> patch embed -> blocks -> neck.
ImageEmbedding encode_image(const Matrix& x, const ImageEncoder& encoder,
                            const PRAdapterBank* bank);

}  // namespace samihs
