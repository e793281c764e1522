#pragma once

// Minimal reverse-mode differentiation over 2D matrices.
//
// A Var is a handle to a graph node. Leaves are created with `parameter` or
// `constant`; every op returns a new node that remembers its inputs only when
// at least one input requires a gradient, so frozen sub-graphs cost nothing
// on the backward pass and never receive gradients.

#include <functional>
#include <memory>
#include <vector>

#include "samihs/grid.hpp"

namespace samihs::ag {

struct Node;
using BackwardFn = std::function<void(Node&)>;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  /// grad += g (allocates on first use).
  void accumulate(const Matrix& g);
  /// Zero-filled gradient buffer of the value's shape.
  Matrix& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  /// Direct write access, for optimizer steps and tests. Never call while a
  /// graph that reads this node is still pending backward.
  Matrix& mutable_value() { return node_->value; }
  /// Gradient; empty Matrix when nothing has flowed into this node.
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad = Matrix(); }

  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double scalar() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var parameter(Matrix value, bool requires_grad = true);

/// Build an op node. `backward` receives the result node; it reads
/// `self.grad` and calls `accumulate` on inputs that require grad.
Var custom(Matrix value, std::vector<Var> inputs, BackwardFn backward);

/// Back-propagate from a 1x1 root (seed 1) or from an arbitrary root with the
/// given seed gradient.
void backward(const Var& root);
void backward(const Var& root, const Matrix& seed);

// Linear algebra.
Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var gelu(const Var& a);
Var sigmoid(const Var& a);

// Broadcast a 1 x cols row over every row of `a`.
Var add_row(const Var& a, const Var& row);
Var mul_row(const Var& a, const Var& row);

// Row-wise normalizations.
Var layer_norm(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-6);
Var softmax_rows(const Var& a);

// Structural.
Var slice_cols(const Var& a, std::size_t start, std::size_t count);
Var slice_rows(const Var& a, std::size_t start, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
/// out.row(i) = a.row(index[i]); backward scatter-adds.
Var gather_rows(const Var& a, const std::vector<std::size_t>& index);
/// Row-major reinterpretation to a new shape of the same size.
Var reshape(const Var& a, std::size_t rows, std::size_t cols);

// Reductions to 1x1.
Var sum(const Var& a);
Var mean(const Var& a);

/// Bilinear resize, align-corners=false, edge-clamped (the usual half-pixel
/// convention). Interpolates as a + t*(b - a) so constant regions stay exact.
Var resize_bilinear(const Var& a, std::size_t out_rows, std::size_t out_cols);
Matrix resize_bilinear(const Matrix& a, std::size_t out_rows, std::size_t out_cols);

}  // namespace samihs::ag
