#include "samihs/backbone.hpp"

#include <algorithm>
#include <string>

namespace samihs {

void EncoderConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw ContractViolation("EncoderConfig: image_size must be a positive multiple of patch_size");
  }
  if (image_size % 2 != 0) throw ContractViolation("EncoderConfig: image_size must be even");
  if (channel_dim == 0 || num_heads == 0 || channel_dim % num_heads != 0) {
    throw ContractViolation("EncoderConfig: channel_dim must be divisible by num_heads");
  }
  if (num_layers == 0) throw ContractViolation("EncoderConfig: num_layers must be >= 1");
  if (mlp_ratio == 0) throw ContractViolation("EncoderConfig: mlp_ratio must be >= 1");
  if (window_size > 0 && grid() % window_size != 0) {
    throw ContractViolation("EncoderConfig: window_size must divide the token grid");
  }
}

std::size_t EncoderConfig::window_for(std::size_t layer) const {
  if (window_size == 0) return 0;
  return std::find(global_layers.begin(), global_layers.end(), layer) != global_layers.end()
             ? 0
             : window_size;
}

void TransformerBlockState::collect(ParamList& out, const std::string& prefix) const {
  ln1.collect(out, prefix + ".ln1");
  attn.collect(out, prefix + ".attn");
  ln2.collect(out, prefix + ".ln2");
  mlp.collect(out, prefix + ".mlp");
}

ImageEncoder ImageEncoder::init(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ImageEncoder e;
  e.config = config;
  const std::size_t c = config.channel_dim;
  e.patch = nn::Linear::init(config.patch_size * config.patch_size, c, rng);
  e.pos = ag::parameter(random_normal(config.num_tokens(), c, 0.02, rng));
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    TransformerBlockState b;
    b.ln1 = nn::LayerNorm::init(c);
    b.attn = nn::Attention::init(c, config.num_heads, rng);
    b.ln2 = nn::LayerNorm::init(c);
    b.mlp = nn::Mlp::init(c, c * config.mlp_ratio, c, rng);
    e.blocks.push_back(std::move(b));
  }
  e.neck = nn::Linear::init(c, c, rng);
  e.neck_norm = nn::LayerNorm::init(c);
  return e;
}

void ImageEncoder::collect(ParamList& out) const {
  patch.collect(out, "encoder.patch");
  out.push_back({"encoder.pos", pos});
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    blocks[l].collect(out, "encoder.block" + std::to_string(l));
  }
  neck.collect(out, "encoder.neck");
  neck_norm.collect(out, "encoder.neck.ln");
}

Matrix upsample_input(const Matrix& x) {
  if (x.rows() < 2 || x.cols() < 2) {
    throw ContractViolation("upsample_input: image must be at least 2x2");
  }
  return ag::resize_bilinear(x, 2 * x.rows(), 2 * x.cols());
}

Matrix patchify(const Matrix& image, std::size_t p) {
  if (p == 0 || image.rows() % p != 0 || image.cols() % p != 0) {
    throw ContractViolation("patchify: image " + shape_str(image.rows(), image.cols()) +
                            " not divisible by patch size " + std::to_string(p));
  }
  const std::size_t gr = image.rows() / p, gc = image.cols() / p;
  Matrix out(gr * gc, p * p);
  for (std::size_t i = 0; i < gr; ++i)
    for (std::size_t j = 0; j < gc; ++j)
      for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) out(i * gc + j, a * p + b) = image(i * p + a, j * p + b);
  return out;
}

ag::Var patch_embed(const Matrix& x_up, const ImageEncoder& encoder) {
  const auto& cfg = encoder.config;
  if (x_up.rows() != cfg.image_size || x_up.cols() != cfg.image_size) {
    throw ContractViolation("patch_embed: expected " + shape_str(cfg.image_size, cfg.image_size) +
                            " input, got " + shape_str(x_up.rows(), x_up.cols()));
  }
  return ag::add(encoder.patch(ag::constant(patchify(x_up, cfg.patch_size))), encoder.pos);
}

std::vector<std::size_t> window_partition_index(std::size_t grid, std::size_t window) {
  if (window == 0 || grid % window != 0) {
    throw ContractViolation("window_partition_index: window must divide grid");
  }
  std::vector<std::size_t> idx;
  idx.reserve(grid * grid);
  const std::size_t nw = grid / window;
  for (std::size_t wi = 0; wi < nw; ++wi)
    for (std::size_t wj = 0; wj < nw; ++wj)
      for (std::size_t a = 0; a < window; ++a)
        for (std::size_t b = 0; b < window; ++b)
          idx.push_back((wi * window + a) * grid + wj * window + b);
  return idx;
}

std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv.at(perm[i]) = i;
  return inv;
}

namespace {

ag::Var attend(const ag::Var& x, const nn::Attention& attn, std::size_t grid, std::size_t window) {
  if (window == 0) return attn(x, x, x);
  const auto perm = window_partition_index(grid, window);
  const ag::Var parts = ag::gather_rows(x, perm);
  const std::size_t per = window * window;
  std::vector<ag::Var> outs;
  for (std::size_t w = 0; w < perm.size() / per; ++w) {
    const ag::Var chunk = ag::slice_rows(parts, w * per, per);
    outs.push_back(attn(chunk, chunk, chunk));
  }
  return ag::gather_rows(ag::concat_rows(outs), invert_permutation(perm));
}

}  // namespace

ag::Var modified_block_forward(const ag::Var& m_prev, const TransformerBlockState& block,
                               const PRAdapterBank* bank, std::size_t layer_index,
                               const EncoderConfig& config) {
  if (layer_index >= config.num_layers) {
    throw ContractViolation("modified_block_forward: layer_index out of range");
  }
  if (m_prev.cols() != config.channel_dim || m_prev.rows() != config.num_tokens()) {
    throw ContractViolation("modified_block_forward: token matrix shape mismatch");
  }
  if (bank) {
    const auto& bc = bank->config();
    if (bc.channel_dim != config.channel_dim || bc.num_layers != config.num_layers) {
      throw ContractViolation("modified_block_forward: adapter bank does not match encoder (c=" +
                              std::to_string(bc.channel_dim) + ", L=" +
                              std::to_string(bc.num_layers) + ")");
    }
  }
  auto adapt = [&](AdapterPosition pos, const ag::Var& t) {
    return bank ? bank->apply(pos, layer_index, t) : t;
  };
  const ag::Var h = adapt(AdapterPosition::mha, block.ln1(m_prev));
  const ag::Var mid =
      ag::add(attend(h, block.attn, config.grid(), config.window_for(layer_index)), m_prev);
  const ag::Var h2 = adapt(AdapterPosition::mlp, block.ln2(mid));
  return ag::add(block.mlp(h2), mid);
}

ImageEmbedding encode_image(const Matrix& x, const ImageEncoder& encoder,
                            const PRAdapterBank* bank) {
  const auto& cfg = encoder.config;
  if (x.rows() != cfg.input_size() || x.cols() != cfg.input_size()) {
    throw ContractViolation("encode_image: expected " +
                            shape_str(cfg.input_size(), cfg.input_size()) + " slice, got " +
                            shape_str(x.rows(), x.cols()));
  }
  ag::Var t = patch_embed(upsample_input(x), encoder);
  for (std::size_t l = 0; l < encoder.blocks.size(); ++l) {
    t = modified_block_forward(t, encoder.blocks[l], bank, l, cfg);
  }
  return {encoder.neck_norm(encoder.neck(t)), cfg.grid()};
}

}  // namespace samihs
