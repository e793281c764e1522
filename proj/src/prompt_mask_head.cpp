#include "samihs/prompt_mask_head.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace samihs {

PromptEncoder PromptEncoder::init(std::size_t channel_dim, std::uint64_t seed) {
  if (channel_dim == 0 || channel_dim % 2 != 0) {
    throw ContractViolation("PromptEncoder: channel_dim must be even");
  }
  Rng rng(seed);
  PromptEncoder p;
  p.gaussian = ag::parameter(random_normal(2, channel_dim / 2, 1.0, rng), false);
  p.fg_embed = ag::parameter(random_normal(1, channel_dim, 1.0, rng));
  return p;
}

Matrix PromptEncoder::positional(double u, double v) const {
  const Matrix& g = gaussian.value();
  const std::size_t half = g.cols();
  Matrix out(1, 2 * half);
  const double cu = 2.0 * u - 1.0, cv = 2.0 * v - 1.0;
  for (std::size_t k = 0; k < half; ++k) {
    const double proj = 2.0 * std::numbers::pi * (cu * g(0, k) + cv * g(1, k));
    out[k] = std::sin(proj);
    out[half + k] = std::cos(proj);
  }
  return out;
}

Matrix PromptEncoder::dense_positional(std::size_t grid) const {
  Matrix out(grid * grid, 2 * gaussian.cols());
  for (std::size_t i = 0; i < grid; ++i)
    for (std::size_t j = 0; j < grid; ++j) {
      const Matrix pe = positional((static_cast<double>(j) + 0.5) / static_cast<double>(grid),
                                   (static_cast<double>(i) + 0.5) / static_cast<double>(grid));
      std::copy(pe.span().begin(), pe.span().end(), out.row(i * grid + j).begin());
    }
  return out;
}

void PromptEncoder::collect(ParamList& params) const {
  params.push_back({"prompt.fg_embed", fg_embed});
}

void PromptEncoder::collect_buffers(ParamList& buffers) const {
  buffers.push_back({"prompt.pe_gaussian", gaussian});
}

ag::Var encode_point_prompt(const PointPrompt& p, std::size_t height, std::size_t width,
                            const PromptEncoder& prompt) {
  if (p.x < 0 || p.y < 0 || static_cast<std::size_t>(p.x) >= width ||
      static_cast<std::size_t>(p.y) >= height) {
    throw ContractViolation("encode_point_prompt: point (" + std::to_string(p.x) + "," +
                            std::to_string(p.y) + ") outside " + shape_str(height, width) +
                            " image");
  }
  const Matrix pe = prompt.positional(static_cast<double>(p.x) / static_cast<double>(width),
                                      static_cast<double>(p.y) / static_cast<double>(height));
  return ag::add(ag::constant(pe), prompt.fg_embed);
}

void DecoderConfig::validate() const {
  if (channel_dim == 0 || num_heads == 0 || channel_dim % num_heads != 0) {
    throw ContractViolation("DecoderConfig: channel_dim must be divisible by num_heads");
  }
  if (num_layers == 0 || mlp_dim == 0 || upscale_channels == 0 || upscale_factor == 0) {
    throw ContractViolation("DecoderConfig: sizes must be positive");
  }
}

MaskDecoder MaskDecoder::init(const DecoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t c = config.channel_dim, cu = config.upscale_channels;
  const std::size_t s = config.upscale_factor;
  MaskDecoder d;
  d.config = config;
  d.mask_token = ag::parameter(random_normal(1, c, 1.0, rng));
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    DecoderLayer layer;
    layer.token_to_image = nn::Attention::init(c, config.num_heads, rng);
    layer.norm1 = nn::LayerNorm::init(c);
    layer.mlp = nn::Mlp::init(c, config.mlp_dim, c, rng);
    layer.norm2 = nn::LayerNorm::init(c);
    layer.image_to_token = nn::Attention::init(c, config.num_heads, rng);
    layer.norm3 = nn::LayerNorm::init(c);
    d.layers.push_back(std::move(layer));
  }
  d.upscale_weight =
      ag::parameter(random_normal(c, s * s * cu, 1.0 / std::sqrt(static_cast<double>(c)), rng));
  d.upscale_bias = ag::parameter(Matrix(1, cu));
  d.hyper = nn::Mlp::init(c, c, cu, rng);
  d.logit_bias = ag::parameter(Matrix(1, 1));
  return d;
}

void MaskDecoder::collect(ParamList& out) const {
  out.push_back({"decoder.mask_token", mask_token});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "decoder.layer" + std::to_string(l);
    layers[l].token_to_image.collect(out, p + ".t2i");
    layers[l].norm1.collect(out, p + ".norm1");
    layers[l].mlp.collect(out, p + ".mlp");
    layers[l].norm2.collect(out, p + ".norm2");
    layers[l].image_to_token.collect(out, p + ".i2t");
    layers[l].norm3.collect(out, p + ".norm3");
  }
  out.push_back({"decoder.upscale.weight", upscale_weight});
  out.push_back({"decoder.upscale.bias", upscale_bias});
  hyper.collect(out, "decoder.hyper");
  out.push_back({"decoder.logit_bias", logit_bias});
}

std::vector<std::size_t> pixel_shuffle_index(std::size_t grid, std::size_t factor) {
  const std::size_t side = grid * factor;
  std::vector<std::size_t> idx(side * side);
  for (std::size_t i = 0; i < grid; ++i)
    for (std::size_t j = 0; j < grid; ++j)
      for (std::size_t a = 0; a < factor; ++a)
        for (std::size_t b = 0; b < factor; ++b) {
          const std::size_t pixel = (i * factor + a) * side + (j * factor + b);
          idx[pixel] = (i * grid + j) * factor * factor + a * factor + b;
        }
  return idx;
}

ag::Var decode_mask(const ImageEmbedding& embedding, const ag::Var& prompt,
                    const MaskDecoder& decoder, const PromptEncoder& prompt_encoder) {
  const auto& cfg = decoder.config;
  const std::size_t c = cfg.channel_dim;
  if (embedding.tokens.cols() != c || prompt.cols() != c || prompt.rows() != 1) {
    throw ContractViolation("decode_mask: width mismatch (embedding " +
                            std::to_string(embedding.tokens.cols()) + ", prompt " +
                            std::to_string(prompt.cols()) + ", decoder " + std::to_string(c) +
                            ")");
  }
  if (embedding.tokens.rows() != embedding.grid * embedding.grid) {
    throw ContractViolation("decode_mask: embedding token count does not match its grid");
  }
  const ag::Var image_pe = ag::constant(prompt_encoder.dense_positional(embedding.grid));
  ag::Var tokens = ag::concat_rows({decoder.mask_token, prompt});
  ag::Var image = embedding.tokens;
  for (const auto& layer : decoder.layers) {
    const ag::Var keys = ag::add(image, image_pe);
    tokens = layer.norm1(ag::add(tokens, layer.token_to_image(tokens, keys, image)));
    tokens = layer.norm2(ag::add(tokens, layer.mlp(tokens)));
    image = layer.norm3(
        ag::add(image, layer.image_to_token(ag::add(image, image_pe), tokens, tokens)));
  }

  // Transposed conv with kernel = stride = factor, then pixel shuffle.
  const std::size_t s = cfg.upscale_factor, cu = cfg.upscale_channels;
  const std::size_t side = embedding.grid * s;
  ag::Var up = ag::matmul(image, decoder.upscale_weight);
  up = ag::reshape(up, embedding.tokens.rows() * s * s, cu);
  up = ag::gather_rows(up, pixel_shuffle_index(embedding.grid, s));
  up = ag::gelu(ag::add_row(up, decoder.upscale_bias));

  const ag::Var hyper = decoder.hyper(ag::slice_rows(tokens, 0, 1));
  const ag::Var logits = ag::add_row(ag::matmul_nt(up, hyper), decoder.logit_bias);
  return ag::reshape(logits, side, side);
}

}  // namespace samihs
