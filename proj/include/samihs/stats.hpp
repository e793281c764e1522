#pragma once

#include <vector>

namespace samihs {

/// Percentile q in [0, 100] with linear interpolation between order
/// statistics (position q/100 * (n-1)). `values` must be nonempty.
double percentile_linear(std::vector<double> values, double q);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t count = 0;
};

MeanStd mean_std(const std::vector<double>& values);

}  // namespace samihs
