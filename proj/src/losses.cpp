#include "samihs/losses.hpp"

#include <algorithm>
#include <cmath>

namespace samihs {

void LossWeights::validate() const {
  if (!(lambda_bd >= 0.0) || !(lambda_ce >= 0.0)) {
    throw ContractViolation("LossWeights: weights must be non-negative");
  }
}

Mask boundary_mask(const Mask& m) {
  Mask out(m.rows(), m.cols());
  const auto rows = static_cast<std::ptrdiff_t>(m.rows());
  const auto cols = static_cast<std::ptrdiff_t>(m.cols());
  auto fg = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
    return r >= 0 && c >= 0 && r < rows && c < cols &&
           m(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) != 0;
  };
  for (std::ptrdiff_t r = 0; r < rows; ++r)
    for (std::ptrdiff_t c = 0; c < cols; ++c) {
      if (!fg(r, c)) continue;
      const bool edge = !fg(r - 1, c) || !fg(r + 1, c) || !fg(r, c - 1) || !fg(r, c + 1);
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = edge ? 1 : 0;
    }
  return out;
}

GroundTruthStats boundary_stats(const Mask& gt) {
  GroundTruthStats s;
  s.size = count_foreground(gt);
  s.boundary = count_foreground(boundary_mask(gt));
  s.gamma = s.size == 0 ? 1.0
                        : 1.0 - static_cast<double>(s.boundary) / static_cast<double>(s.size);
  return s;
}

SoftConfusion soft_confusion(const Matrix& pred, const Mask& gt) {
  require_same_shape(pred, gt, "soft_confusion");
  SoftConfusion sc;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    if (gt[i]) {
      sc.tp += p;
      sc.fn += 1.0 - p;
    } else {
      sc.fp += p;
    }
  }
  return sc;
}

namespace {

void check_probabilities(const Matrix& pred, const Mask& gt, const char* what) {
  require_same_shape(pred, gt, what);
  for (double p : pred.span()) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ContractViolation(std::string(what) + ": prediction outside [0, 1]");
    }
  }
}

}  // namespace

double boundary_sensitive_loss(const Matrix& pred, const Mask& gt) {
  check_probabilities(pred, gt, "boundary_sensitive_loss");
  const double gamma = boundary_stats(gt).gamma;
  const SoftConfusion sc = soft_confusion(pred, gt);
  const double num = 2.0 * gamma * sc.tp;
  const double den = num + sc.fp + sc.fn;
  return den == 0.0 ? 0.0 : 1.0 - num / den;
}

Matrix boundary_sensitive_loss_grad(const Matrix& pred, const Mask& gt) {
  check_probabilities(pred, gt, "boundary_sensitive_loss_grad");
  const double gamma = boundary_stats(gt).gamma;
  const SoftConfusion sc = soft_confusion(pred, gt);
  const double num = 2.0 * gamma * sc.tp;
  const double den = num + sc.fp + sc.fn;
  Matrix g(pred.rows(), pred.cols());
  if (den == 0.0) return g;
  // d(num)/dp = 2*gamma*g ; d(den)/dp = 2*gamma*g + (1-g) - g
  const double inv_den2 = 1.0 / (den * den);
  const double d_fg = -(2.0 * gamma * den - num * (2.0 * gamma - 1.0)) * inv_den2;
  const double d_bg = num * inv_den2;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = gt[i] ? d_fg : d_bg;
  return g;
}

double bce_loss(const Matrix& pred, const Mask& gt) {
  require_same_shape(pred, gt, "bce_loss");
  if (pred.empty()) throw ContractViolation("bce_loss: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], kBceEpsilon, 1.0 - kBceEpsilon);
    s -= gt[i] ? std::log(p) : std::log(1.0 - p);
  }
  return s / static_cast<double>(pred.size());
}

Matrix bce_loss_grad(const Matrix& pred, const Mask& gt) {
  require_same_shape(pred, gt, "bce_loss_grad");
  Matrix g(pred.rows(), pred.cols());
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i];
    if (p < kBceEpsilon || p > 1.0 - kBceEpsilon) continue;
    g[i] = (gt[i] ? -1.0 / p : 1.0 / (1.0 - p)) * inv_n;
  }
  return g;
}

double combo_loss(const Matrix& pred, const Mask& gt, const LossWeights& w) {
  w.validate();
  return w.lambda_bd * boundary_sensitive_loss(pred, gt) + w.lambda_ce * bce_loss(pred, gt);
}

double combo_loss(const std::vector<Matrix>& preds, const std::vector<Mask>& gts,
                  const LossWeights& w) {
  if (preds.size() != gts.size() || preds.empty()) {
    throw ContractViolation("combo_loss: batch size mismatch or empty batch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += combo_loss(preds[i], gts[i], w);
  return s / static_cast<double>(preds.size());
}

ag::Var boundary_sensitive_loss(const ag::Var& pred, const Mask& gt) {
  const double v = boundary_sensitive_loss(pred.value(), gt);
  return ag::custom(Matrix(1, 1, v), {pred}, [gt](ag::Node& self) {
    Matrix g = boundary_sensitive_loss_grad(self.inputs[0]->value, gt);
    for (auto& x : g.span()) x *= self.grad[0];
    self.inputs[0]->accumulate(g);
  });
}

ag::Var bce_loss(const ag::Var& pred, const Mask& gt) {
  const double v = bce_loss(pred.value(), gt);
  return ag::custom(Matrix(1, 1, v), {pred}, [gt](ag::Node& self) {
    Matrix g = bce_loss_grad(self.inputs[0]->value, gt);
    for (auto& x : g.span()) x *= self.grad[0];
    self.inputs[0]->accumulate(g);
  });
}

ag::Var combo_loss(const ag::Var& pred, const Mask& gt, const LossWeights& w) {
  w.validate();
  return ag::add(ag::scale(boundary_sensitive_loss(pred, gt), w.lambda_bd),
                 ag::scale(bce_loss(pred, gt), w.lambda_ce));
}

}  // namespace samihs
