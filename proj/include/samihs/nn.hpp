#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "samihs/autograd.hpp"

namespace samihs {

using Rng = std::mt19937_64;

/// A named graph leaf. `var.requires_grad()` is the trainable flag.
struct NamedParam {
  std::string name;
  ag::Var var;
};
using ParamList = std::vector<NamedParam>;

Matrix random_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

namespace nn {

struct Linear {
  ag::Var weight;  // in x out
  ag::Var bias;    // 1 x out

  static Linear init(std::size_t in, std::size_t out, Rng& rng);
  ag::Var operator()(const ag::Var& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct LayerNorm {
  ag::Var gamma;
  ag::Var beta;

  static LayerNorm init(std::size_t width);
  ag::Var operator()(const ag::Var& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct Mlp {
  Linear fc1;
  Linear fc2;

  static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  /// fc2(gelu(fc1(x)))
  ag::Var operator()(const ag::Var& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct Attention {
  Linear q, k, v, o;
  std::size_t num_heads = 1;

  static Attention init(std::size_t width, std::size_t num_heads, Rng& rng);
  /// Scaled dot-product multi-head attention; queries from `query`, keys
  /// from `key`, values from `value`. Key and value must have equal rows.
  ag::Var operator()(const ag::Var& query, const ag::Var& key, const ag::Var& value) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

}  // namespace nn

/// Deep copy of every tensor value in `params` (grads are not copied).
std::vector<Matrix> snapshot(const ParamList& params);

}  // namespace samihs
