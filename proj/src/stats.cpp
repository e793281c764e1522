#include "samihs/stats.hpp"

#include <algorithm>
#include <cmath>

#include "samihs/grid.hpp"

namespace samihs {

double percentile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw ContractViolation("percentile_linear: empty input");
  if (!(q >= 0.0 && q <= 100.0)) throw ContractViolation("percentile_linear: q outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return values[lo] + t * (values[hi] - values[lo]);
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  out.count = values.size();
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(values.size()));
  return out;
}

}  // namespace samihs
