#pragma once

// Dice, 95th-percentile Hausdorff distance, and per-slice volume reports.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "samihs/grid.hpp"
#include "samihs/kernels.hpp"

namespace samihs {

struct Spacing {
  double row_mm = 1.0;
  double col_mm = 1.0;
};

enum class Hd95Pooling {
  pooled,            // percentile of both directed distance sets together
  max_of_directed,   // max of the two directed percentiles
};

/// 2|P n G| / (|P| + |G|); 1 when both masks are empty.
double dice_score(const Mask& pred, const Mask& gt);

/// Boundary pixels (4-connectivity, same rule as the losses) as physical
/// coordinates.
std::vector<kernels::Point2> boundary_points(const Mask& m, const Spacing& spacing);

/// 95th percentile of boundary-to-boundary distances. nullopt when exactly
/// one mask is empty; 0 when both are.
std::optional<double> hd95(const Mask& pred, const Mask& gt, const Spacing& spacing = {},
                           Hd95Pooling pooling = Hd95Pooling::pooled);

struct SliceResult {
  int slice_index = 0;
  std::optional<double> dice;
  std::optional<double> hd95;
};

std::vector<SliceResult> per_slice_volume_report(const std::vector<Mask>& preds,
                                                 const std::vector<Mask>& gts,
                                                 const Spacing& spacing = {});

struct MetricSummary {
  std::optional<double> mean;  // nullopt when no defined entries
  double std = 0.0;
  std::size_t count = 0;     // defined entries
  std::size_t excluded = 0;  // undefined entries
};

struct ReportSummary {
  MetricSummary dice;
  MetricSummary hd95;
};

ReportSummary summarize(const std::vector<SliceResult>& rows);

/// Header `slice,dice,hd95`; undefined values are written as `NA`.
std::string report_csv(const std::vector<SliceResult>& rows);
nlohmann::json summary_json(const ReportSummary& summary);

}  // namespace samihs
