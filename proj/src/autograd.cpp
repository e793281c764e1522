#include "samihs/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "samihs/kernels.hpp"

namespace samihs::ag {

void Node::accumulate(const Matrix& g) {
  if (grad.empty()) {
    if (!g.same_shape(value)) throw ContractViolation("gradient shape mismatch");
    grad = g;
    return;
  }
  require_same_shape(grad, g, "accumulate");
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

Matrix& Node::grad_buffer() {
  if (grad.empty()) grad = Matrix(value.rows(), value.cols());
  return grad;
}

double Var::scalar() const {
  if (value().size() != 1) throw ContractViolation("scalar(): value is not 1x1");
  return value()[0];
}

Var constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var parameter(Matrix value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Var custom(Matrix value, std::vector<Var> inputs, BackwardFn backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Var& v) { return v.requires_grad(); });
  if (any) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (auto& v : inputs) n->inputs.push_back(v.ptr());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

void backward(const Var& root) {
  if (root.value().size() != 1) throw ContractViolation("backward: root is not a scalar");
  backward(root, Matrix(1, 1, 1.0));
}

void backward(const Var& root, const Matrix& seed) {
  require_same_shape(root.value(), seed, "backward seed");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (n->backward) n->grad = Matrix();
  }
  root.node()->accumulate(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

namespace {

Node& in(Node& self, std::size_t i) { return *self.inputs[i]; }

Matrix transposed(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
  return t;
}

void require_row(const Var& a, const Var& row, const char* what) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ContractViolation(std::string(what) + ": expected 1x" + std::to_string(a.cols()) +
                            " row, got " + shape_str(row.rows(), row.cols()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  return custom(kernels::matmul(a.value(), b.value()), {a, b}, [](Node& self) {
    Node& x = in(self, 0);
    Node& y = in(self, 1);
    if (x.requires_grad) x.accumulate(kernels::matmul_nt(self.grad, y.value));
    if (y.requires_grad) y.accumulate(kernels::matmul_tn(x.value, self.grad));
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  return custom(kernels::matmul_nt(a.value(), b.value()), {a, b}, [](Node& self) {
    Node& x = in(self, 0);
    Node& y = in(self, 1);
    if (x.requires_grad) x.accumulate(kernels::matmul(self.grad, y.value));
    if (y.requires_grad) y.accumulate(kernels::matmul_tn(self.grad, x.value));
  });
}

Var transpose(const Var& a) {
  return custom(transposed(a.value()), {a},
                [](Node& self) { in(self, 0).accumulate(transposed(self.grad)); });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return custom(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (in(self, k).requires_grad) in(self, k).accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return custom(std::move(out), {a, b}, [](Node& self) {
    if (in(self, 0).requires_grad) in(self, 0).accumulate(self.grad);
    if (in(self, 1).requires_grad) {
      Matrix g = self.grad;
      for (auto& v : g.span()) v = -v;
      in(self, 1).accumulate(g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return custom(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& x = in(self, k);
      if (!x.requires_grad) continue;
      const Matrix& other = in(self, 1 - k).value;
      Matrix g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= other[i];
      x.accumulate(g);
    }
  });
}

Var scale(const Var& a, double s) {
  Matrix out = a.value();
  for (auto& v : out.span()) v *= s;
  return custom(std::move(out), {a}, [s](Node& self) {
    Matrix g = self.grad;
    for (auto& v : g.span()) v *= s;
    in(self, 0).accumulate(g);
  });
}

Var gelu(const Var& a) {
  Matrix out = a.value();
  for (auto& v : out.span()) v = 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  return custom(std::move(out), {a}, [](Node& self) {
    const Matrix& x = in(self, 0).value;
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] / std::numbers::sqrt2));
      const double pdf = std::exp(-0.5 * x[i] * x[i]) / std::sqrt(2.0 * std::numbers::pi);
      g[i] *= cdf + x[i] * pdf;
    }
    in(self, 0).accumulate(g);
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value();
  for (auto& v : out.span()) {
    if (v >= 0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return custom(out, {a}, [y = out](Node& self) {
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
    in(self, 0).accumulate(g);
  });
}

Var add_row(const Var& a, const Var& row) {
  require_row(a, row, "add_row");
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += row.value()[c];
  return custom(std::move(out), {a, row}, [](Node& self) {
    if (in(self, 0).requires_grad) in(self, 0).accumulate(self.grad);
    if (in(self, 1).requires_grad) {
      Matrix g(1, self.grad.cols());
      for (std::size_t r = 0; r < self.grad.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) g[c] += self.grad(r, c);
      in(self, 1).accumulate(g);
    }
  });
}

Var mul_row(const Var& a, const Var& row) {
  require_row(a, row, "mul_row");
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= row.value()[c];
  return custom(std::move(out), {a, row}, [](Node& self) {
    const Matrix& x = in(self, 0).value;
    const Matrix& s = in(self, 1).value;
    if (in(self, 0).requires_grad) {
      Matrix g = self.grad;
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) *= s[c];
      in(self, 0).accumulate(g);
    }
    if (in(self, 1).requires_grad) {
      Matrix g(1, x.cols());
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) g[c] += self.grad(r, c) * x(r, c);
      in(self, 1).accumulate(g);
    }
  });
}

Var layer_norm(const Var& a, const Var& gamma, const Var& beta, double eps) {
  require_row(a, gamma, "layer_norm gamma");
  require_row(a, beta, "layer_norm beta");
  const Matrix& x = a.value();
  const std::size_t n = x.cols();
  Matrix xhat(x.rows(), n);
  std::vector<double> inv_std(x.rows());
  Matrix out(x.rows(), n);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += x(r, c);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (x(r, c) - mu) * inv_std[r];
      out(r, c) = xhat(r, c) * gamma.value()[c] + beta.value()[c];
    }
  }
  return custom(std::move(out), {a, gamma, beta},
                [xhat, inv_std](Node& self) {
                  const Matrix& dy = self.grad;
                  const Matrix& g = in(self, 1).value;
                  const std::size_t rows = dy.rows(), n = dy.cols();
                  if (in(self, 0).requires_grad) {
                    Matrix dx(rows, n);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double m1 = 0.0, m2 = 0.0;
                      for (std::size_t c = 0; c < n; ++c) {
                        const double d = dy(r, c) * g[c];
                        m1 += d;
                        m2 += d * xhat(r, c);
                      }
                      m1 /= static_cast<double>(n);
                      m2 /= static_cast<double>(n);
                      for (std::size_t c = 0; c < n; ++c) {
                        dx(r, c) = inv_std[r] * (dy(r, c) * g[c] - m1 - xhat(r, c) * m2);
                      }
                    }
                    in(self, 0).accumulate(dx);
                  }
                  if (in(self, 1).requires_grad || in(self, 2).requires_grad) {
                    Matrix dg(1, n), db(1, n);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < n; ++c) {
                        dg[c] += dy(r, c) * xhat(r, c);
                        db[c] += dy(r, c);
                      }
                    if (in(self, 1).requires_grad) in(self, 1).accumulate(dg);
                    if (in(self, 2).requires_grad) in(self, 2).accumulate(db);
                  }
                });
}

Var softmax_rows(const Var& a) {
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (auto& v : row) {
      v = std::exp(v - mx);
      s += v;
    }
    for (auto& v : row) v /= s;
  }
  return custom(out, {a}, [y = out](Node& self) {
    Matrix g = self.grad;
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < g.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) = y(r, c) * (g(r, c) - dot);
    }
    in(self, 0).accumulate(g);
  });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t count) {
  if (start + count > a.cols()) throw ContractViolation("slice_cols: out of range");
  Matrix out(a.rows(), count);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = a.value()(r, start + c);
  return custom(std::move(out), {a}, [start](Node& self) {
    Node& x = in(self, 0);
    Matrix& g = x.grad_buffer();
    for (std::size_t r = 0; r < self.grad.rows(); ++r)
      for (std::size_t c = 0; c < self.grad.cols(); ++c) g(r, start + c) += self.grad(r, c);
  });
}

Var slice_rows(const Var& a, std::size_t start, std::size_t count) {
  if (start + count > a.rows()) throw ContractViolation("slice_rows: out of range");
  const std::size_t w = a.cols();
  Matrix out(count, w,
             std::vector<double>(a.value().data() + start * w,
                                 a.value().data() + (start + count) * w));
  return custom(std::move(out), {a}, [start](Node& self) {
    Matrix& g = in(self, 0).grad_buffer();
    const std::size_t off = start * g.cols();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[off + i] += self.grad[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractViolation("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ContractViolation("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < p.cols(); ++c) out(r, off + c) = p.value()(r, c);
    off += p.cols();
  }
  return custom(std::move(out), parts, [offsets](Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      Node& x = in(self, k);
      if (!x.requires_grad) continue;
      Matrix g(x.value.rows(), x.value.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) = self.grad(r, offsets[k] + c);
      x.accumulate(g);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractViolation("concat_rows: no inputs");
  const std::size_t cols = parts.front().cols();
  std::vector<double> data;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ContractViolation("concat_rows: column count mismatch");
    data.insert(data.end(), p.value().span().begin(), p.value().span().end());
  }
  const std::size_t rows = data.size() / std::max<std::size_t>(cols, 1);
  return custom(Matrix(rows, cols, std::move(data)), parts, [](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      Node& x = in(self, k);
      const std::size_t n = x.value.size();
      if (x.requires_grad) {
        Matrix g(x.value.rows(), x.value.cols(),
                 std::vector<double>(self.grad.data() + off, self.grad.data() + off + n));
        x.accumulate(g);
      }
      off += n;
    }
  });
}

Var gather_rows(const Var& a, const std::vector<std::size_t>& index) {
  const std::size_t w = a.cols();
  Matrix out(index.size(), w);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= a.rows()) throw ContractViolation("gather_rows: index out of range");
    std::copy_n(a.value().data() + index[i] * w, w, out.data() + i * w);
  }
  return custom(std::move(out), {a}, [index](Node& self) {
    Matrix& g = in(self, 0).grad_buffer();
    const std::size_t w = g.cols();
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t c = 0; c < w; ++c) g(index[i], c) += self.grad(i, c);
  });
}

Var reshape(const Var& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size()) throw ContractViolation("reshape: size mismatch");
  return custom(Matrix(rows, cols, a.value().values()), {a}, [](Node& self) {
    Node& x = in(self, 0);
    x.accumulate(Matrix(x.value.rows(), x.value.cols(), self.grad.values()));
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().span()) s += v;
  return custom(Matrix(1, 1, s), {a}, [](Node& self) {
    Node& x = in(self, 0);
    x.accumulate(Matrix(x.value.rows(), x.value.cols(), self.grad[0]));
  });
}

Var mean(const Var& a) {
  if (a.value().empty()) throw ContractViolation("mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double t;
};

std::vector<Tap> bilinear_taps(std::size_t in_n, std::size_t out_n) {
  std::vector<Tap> taps(out_n);
  const double ratio = static_cast<double>(in_n) / static_cast<double>(out_n);
  for (std::size_t o = 0; o < out_n; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in_n - 1) i0 = in_n - 1;
    const std::size_t i1 = std::min(i0 + 1, in_n - 1);
    taps[o] = {i0, i1, i1 == i0 ? 0.0 : src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Matrix resize_bilinear(const Matrix& a, std::size_t out_rows, std::size_t out_cols) {
  if (a.empty() || out_rows == 0 || out_cols == 0) {
    throw ContractViolation("resize_bilinear: empty input or output");
  }
  const auto rt = bilinear_taps(a.rows(), out_rows);
  const auto ct = bilinear_taps(a.cols(), out_cols);
  Matrix out(out_rows, out_cols);
  for (std::size_t r = 0; r < out_rows; ++r) {
    const auto& tr = rt[r];
    for (std::size_t c = 0; c < out_cols; ++c) {
      const auto& tc = ct[c];
      const double top = a(tr.i0, tc.i0) + tc.t * (a(tr.i0, tc.i1) - a(tr.i0, tc.i0));
      const double bot = a(tr.i1, tc.i0) + tc.t * (a(tr.i1, tc.i1) - a(tr.i1, tc.i0));
      out(r, c) = top + tr.t * (bot - top);
    }
  }
  return out;
}

Var resize_bilinear(const Var& a, std::size_t out_rows, std::size_t out_cols) {
  Matrix out = resize_bilinear(a.value(), out_rows, out_cols);
  auto rt = bilinear_taps(a.rows(), out_rows);
  auto ct = bilinear_taps(a.cols(), out_cols);
  return custom(std::move(out), {a}, [rt, ct](Node& self) {
    Matrix& g = in(self, 0).grad_buffer();
    for (std::size_t r = 0; r < rt.size(); ++r) {
      const auto& tr = rt[r];
      for (std::size_t c = 0; c < ct.size(); ++c) {
        const auto& tc = ct[c];
        const double d = self.grad(r, c);
        g(tr.i0, tc.i0) += d * (1.0 - tr.t) * (1.0 - tc.t);
        g(tr.i0, tc.i1) += d * (1.0 - tr.t) * tc.t;
        g(tr.i1, tc.i0) += d * tr.t * (1.0 - tc.t);
        g(tr.i1, tc.i1) += d * tr.t * tc.t;
      }
    }
  });
}

}  // namespace samihs::ag
