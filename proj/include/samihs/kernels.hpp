#pragma once

// Dense kernels used by the autodiff graph and the metrics.
//
// Every kernel has a serial reference in `serial::` and an OpenMP version in
// `parallel::`. The parallel versions split work over output rows only, so
// each output element is accumulated in the same order as the serial one and
// the results are bitwise identical for any thread count.

#include <span>

#include "samihs/grid.hpp"

namespace samihs::kernels {

struct Point2 {
  double row = 0.0;
  double col = 0.0;
};

namespace serial {
/// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
/// C = A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// C = A * B^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// out[i] = min_j |from[i] - to[j]|, Euclidean. `to` must be nonempty.
std::vector<double> directed_distances(std::span<const Point2> from, std::span<const Point2> to);
}  // namespace serial

namespace parallel {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
std::vector<double> directed_distances(std::span<const Point2> from, std::span<const Point2> to);
}  // namespace parallel

// Dispatchers: pick the parallel path once the work is large enough to pay
// for a thread team. Both paths produce identical bits.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
std::vector<double> directed_distances(std::span<const Point2> from, std::span<const Point2> to);

}  // namespace samihs::kernels
