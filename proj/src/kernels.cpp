#include "samihs/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace samihs::kernels {
namespace {

constexpr std::size_t kParallelWork = 1u << 15;

void check_nn(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ContractViolation("matmul: inner dimension mismatch " + shape_str(a.rows(), a.cols()) +
                            " * " + shape_str(b.rows(), b.cols()));
  }
}
void check_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ContractViolation("matmul_tn: inner dimension mismatch " +
                            shape_str(a.rows(), a.cols()) + "^T * " +
                            shape_str(b.rows(), b.cols()));
  }
}
void check_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ContractViolation("matmul_nt: inner dimension mismatch " +
                            shape_str(a.rows(), a.cols()) + " * " +
                            shape_str(b.rows(), b.cols()) + "^T");
  }
}

// Row kernels shared by both paths. Accumulation order is fixed per element.
inline void nn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  const std::size_t k_dim = a.cols(), n = b.cols();
  double* out = c.data() + i * n;
  for (std::size_t k = 0; k < k_dim; ++k) {
    const double aik = a(i, k);
    const double* brow = b.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += aik * brow[j];
  }
}
inline void tn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  const std::size_t k_dim = a.rows(), n = b.cols();
  double* out = c.data() + i * n;
  for (std::size_t k = 0; k < k_dim; ++k) {
    const double aki = a(k, i);
    const double* brow = b.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += aki * brow[j];
  }
}
inline void nt_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  const std::size_t k_dim = a.cols();
  const double* arow = a.data() + i * k_dim;
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const double* brow = b.data() + j * k_dim;
    double s = 0.0;
    for (std::size_t k = 0; k < k_dim; ++k) s += arow[k] * brow[k];
    c(i, j) = s;
  }
}
inline double nearest(const Point2& p, std::span<const Point2> to) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : to) {
    const double dr = p.row - q.row, dc = p.col - q.col;
    best = std::min(best, dr * dr + dc * dc);
  }
  return std::sqrt(best);
}
void check_target(std::span<const Point2> to) {
  if (to.empty()) throw ContractViolation("directed_distances: empty target set");
}

}  // namespace

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_nn(a, b);
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) nn_row(a, b, c, i);
  return c;
}
Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_tn(a, b);
  Matrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) tn_row(a, b, c, i);
  return c;
}
Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_nt(a, b);
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) nt_row(a, b, c, i);
  return c;
}
std::vector<double> directed_distances(std::span<const Point2> from, std::span<const Point2> to) {
  check_target(to);
  std::vector<double> out(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) out[i] = nearest(from[i], to);
  return out;
}

}  // namespace serial

namespace parallel {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_nn(a, b);
  Matrix c(a.rows(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) nn_row(a, b, c, static_cast<std::size_t>(i));
  return c;
}
Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_tn(a, b);
  Matrix c(a.cols(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.cols());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) tn_row(a, b, c, static_cast<std::size_t>(i));
  return c;
}
Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_nt(a, b);
  Matrix c(a.rows(), b.rows());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) nt_row(a, b, c, static_cast<std::size_t>(i));
  return c;
}
std::vector<double> directed_distances(std::span<const Point2> from, std::span<const Point2> to) {
  check_target(to);
  std::vector<double> out(from.size());
  const auto n = static_cast<std::ptrdiff_t>(from.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = nearest(from[static_cast<std::size_t>(i)], to);
  }
  return out;
}

}  // namespace parallel

Matrix matmul(const Matrix& a, const Matrix& b) {
  return a.rows() * a.cols() * b.cols() >= kParallelWork ? parallel::matmul(a, b)
                                                         : serial::matmul(a, b);
}
Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  return a.rows() * a.cols() * b.cols() >= kParallelWork ? parallel::matmul_tn(a, b)
                                                         : serial::matmul_tn(a, b);
}
Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  return a.rows() * a.cols() * b.rows() >= kParallelWork ? parallel::matmul_nt(a, b)
                                                         : serial::matmul_nt(a, b);
}
std::vector<double> directed_distances(std::span<const Point2> from, std::span<const Point2> to) {
  return from.size() * to.size() >= kParallelWork ? parallel::directed_distances(from, to)
                                                  : serial::directed_distances(from, to);
}

}  // namespace samihs::kernels
