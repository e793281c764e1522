#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "samihs/autograd.hpp"

namespace gradcheck {

struct Result {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

/// Compares reverse-mode gradients of `loss()` against central differences on
/// up to `per_tensor` randomly chosen entries of each listed leaf.
inline Result check(const std::function<samihs::ag::Var()>& loss,
                    const std::vector<std::pair<std::string, samihs::ag::Var>>& leaves,
                    std::size_t per_tensor, std::uint64_t seed, double h = 1e-5) {
  for (const auto& [_, v] : leaves) {
    auto copy = v;
    copy.zero_grad();
  }
  const samihs::ag::Var root = loss();
  samihs::ag::backward(root);
  std::vector<samihs::Matrix> analytic;
  for (const auto& [_, v] : leaves) {
    analytic.push_back(v.grad().empty() ? samihs::Matrix(v.rows(), v.cols()) : v.grad());
  }
  std::mt19937_64 rng(seed);
  Result res;
  for (std::size_t t = 0; t < leaves.size(); ++t) {
    auto var = leaves[t].second;
    const std::size_t n = var.value().size();
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const std::size_t count = std::min(per_tensor, n);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t i = count == n ? k : pick(rng);
      double& x = var.mutable_value()[i];
      const double num = oracle::central_difference([&] { return loss().scalar(); }, x, h);
      const double err = oracle::rel_err(analytic[t][i], num);
      ++res.checked;
      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.worst = leaves[t].first + "[" + std::to_string(i) + "] analytic=" +
                    std::to_string(analytic[t][i]) + " numeric=" + std::to_string(num);
      }
    }
  }
  return res;
}

}  // namespace gradcheck
