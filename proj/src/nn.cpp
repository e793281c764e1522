#include "samihs/nn.hpp"

#include <cmath>

namespace samihs {

Matrix random_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (auto& v : m.span()) v = dist(rng);
  return m;
}

std::vector<Matrix> snapshot(const ParamList& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.var.value());
  return out;
}

namespace nn {

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
  return {ag::parameter(random_normal(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
          ag::parameter(Matrix(1, out))};
}

ag::Var Linear::operator()(const ag::Var& x) const {
  return ag::add_row(ag::matmul(x, weight), bias);
}

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNorm LayerNorm::init(std::size_t width) {
  return {ag::parameter(Matrix(1, width, 1.0)), ag::parameter(Matrix(1, width))};
}

ag::Var LayerNorm::operator()(const ag::Var& x) const { return ag::layer_norm(x, gamma, beta); }

void LayerNorm::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", gamma});
  out.push_back({prefix + ".bias", beta});
}

Mlp Mlp::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  Linear a = Linear::init(in, hidden, rng);
  Linear b = Linear::init(hidden, out, rng);
  return {a, b};
}

ag::Var Mlp::operator()(const ag::Var& x) const { return fc2(ag::gelu(fc1(x))); }

void Mlp::collect(ParamList& out, const std::string& prefix) const {
  fc1.collect(out, prefix + ".fc1");
  fc2.collect(out, prefix + ".fc2");
}

Attention Attention::init(std::size_t width, std::size_t num_heads, Rng& rng) {
  if (num_heads == 0 || width % num_heads != 0) {
    throw ContractViolation("Attention: width must be divisible by num_heads");
  }
  Attention a;
  a.q = Linear::init(width, width, rng);
  a.k = Linear::init(width, width, rng);
  a.v = Linear::init(width, width, rng);
  a.o = Linear::init(width, width, rng);
  a.num_heads = num_heads;
  return a;
}

ag::Var Attention::operator()(const ag::Var& query, const ag::Var& key,
                              const ag::Var& value) const {
  if (key.rows() != value.rows()) throw ContractViolation("Attention: key/value row mismatch");
  const ag::Var qp = q(query);
  const ag::Var kp = k(key);
  const ag::Var vp = v(value);
  const std::size_t head_dim = qp.cols() / num_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<ag::Var> heads;
  heads.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const ag::Var qh = ag::slice_cols(qp, h * head_dim, head_dim);
    const ag::Var kh = ag::slice_cols(kp, h * head_dim, head_dim);
    const ag::Var vh = ag::slice_cols(vp, h * head_dim, head_dim);
    const ag::Var weights = ag::softmax_rows(ag::scale(ag::matmul_nt(qh, kh), inv_sqrt));
    heads.push_back(ag::matmul(weights, vh));
  }
  return o(num_heads == 1 ? heads.front() : ag::concat_cols(heads));
}

void Attention::collect(ParamList& out, const std::string& prefix) const {
  q.collect(out, prefix + ".q");
  k.collect(out, prefix + ".k");
  v.collect(out, prefix + ".v");
  o.collect(out, prefix + ".o");
}

}  // namespace nn
}  // namespace samihs
