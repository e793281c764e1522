#pragma once

// Boundary-sensitive loss, binary cross-entropy and their weighted sum.
//
//   L_bd = 1 - 2*gamma*TP / (2*gamma*TP + FP + FN),  gamma = 1 - t_c / t_s
//
// TP/FP/FN are soft counts over probabilities. t_s is the foreground pixel
// count and t_c the number of foreground pixels with a background (or
// out-of-bounds) 4-neighbour. Empty ground truth uses gamma = 1, and a zero
// denominator yields a loss of 0.

#include <vector>

#include "samihs/autograd.hpp"
#include "samihs/grid.hpp"

namespace samihs {

struct GroundTruthStats {
  std::size_t boundary = 0;  // t_c
  std::size_t size = 0;      // t_s
  double gamma = 1.0;
};

struct SoftConfusion {
  double tp = 0.0;
  double fp = 0.0;
  double fn = 0.0;
};

struct LossWeights {
  double lambda_bd = 0.5;
  double lambda_ce = 0.5;

  void validate() const;
};

inline constexpr double kBceEpsilon = 1e-7;

/// Foreground pixels with at least one 4-neighbour that is background or
/// outside the grid.
Mask boundary_mask(const Mask& m);

GroundTruthStats boundary_stats(const Mask& gt);
SoftConfusion soft_confusion(const Matrix& pred, const Mask& gt);

double boundary_sensitive_loss(const Matrix& pred, const Mask& gt);
/// d L_bd / d pred (zero wherever the denominator vanishes).
Matrix boundary_sensitive_loss_grad(const Matrix& pred, const Mask& gt);

double bce_loss(const Matrix& pred, const Mask& gt);
/// d L_ce / d pred; zero where the clamp is active.
Matrix bce_loss_grad(const Matrix& pred, const Mask& gt);

double combo_loss(const Matrix& pred, const Mask& gt, const LossWeights& w);
/// Per-image combo loss averaged over the batch.
double combo_loss(const std::vector<Matrix>& preds, const std::vector<Mask>& gts,
                  const LossWeights& w);

// Graph versions used during training.
ag::Var boundary_sensitive_loss(const ag::Var& pred, const Mask& gt);
ag::Var bce_loss(const ag::Var& pred, const Mask& gt);
ag::Var combo_loss(const ag::Var& pred, const Mask& gt, const LossWeights& w);

}  // namespace samihs
