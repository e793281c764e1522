#include "samihs/metrics.hpp"

#include <cstdio>

#include "samihs/losses.hpp"
#include "samihs/stats.hpp"

namespace samihs {

double dice_score(const Mask& pred, const Mask& gt) {
  require_same_shape(pred, gt, "dice_score");
  std::size_t inter = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    inter += p && g;
    np += p;
    ng += g;
  }
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

std::vector<kernels::Point2> boundary_points(const Mask& m, const Spacing& spacing) {
  const Mask b = boundary_mask(m);
  std::vector<kernels::Point2> pts;
  for (std::size_t r = 0; r < b.rows(); ++r)
    for (std::size_t c = 0; c < b.cols(); ++c)
      if (b(r, c)) {
        pts.push_back({static_cast<double>(r) * spacing.row_mm,
                       static_cast<double>(c) * spacing.col_mm});
      }
  return pts;
}

std::optional<double> hd95(const Mask& pred, const Mask& gt, const Spacing& spacing,
                           Hd95Pooling pooling) {
  require_same_shape(pred, gt, "hd95");
  const auto a = boundary_points(pred, spacing);
  const auto b = boundary_points(gt, spacing);
  if (a.empty() && b.empty()) return 0.0;
  if (a.empty() || b.empty()) return std::nullopt;
  auto ab = kernels::directed_distances(a, b);
  auto ba = kernels::directed_distances(b, a);
  if (pooling == Hd95Pooling::max_of_directed) {
    return std::max(percentile_linear(std::move(ab), 95.0), percentile_linear(std::move(ba), 95.0));
  }
  ab.insert(ab.end(), ba.begin(), ba.end());
  return percentile_linear(std::move(ab), 95.0);
}

std::vector<SliceResult> per_slice_volume_report(const std::vector<Mask>& preds,
                                                 const std::vector<Mask>& gts,
                                                 const Spacing& spacing) {
  if (preds.size() != gts.size()) {
    throw ContractViolation("per_slice_volume_report: " + std::to_string(preds.size()) +
                            " predictions for " + std::to_string(gts.size()) + " slices");
  }
  for (std::size_t k = 0; k < preds.size(); ++k) {
    require_same_shape(preds[k], gts[k], "per_slice_volume_report");
  }
  std::vector<SliceResult> rows(preds.size());
  const auto n = static_cast<std::ptrdiff_t>(preds.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    rows[k] = {static_cast<int>(i), dice_score(preds[k], gts[k]), hd95(preds[k], gts[k], spacing)};
  }
  return rows;
}

namespace {

MetricSummary summarize_one(const std::vector<SliceResult>& rows,
                            std::optional<double> SliceResult::*field) {
  std::vector<double> vals;
  MetricSummary s;
  for (const auto& r : rows) {
    if ((r.*field).has_value()) {
      vals.push_back(*(r.*field));
    } else {
      ++s.excluded;
    }
  }
  const MeanStd ms = mean_std(vals);
  s.count = ms.count;
  if (ms.count > 0) {
    s.mean = ms.mean;
    s.std = ms.std;
  }
  return s;
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

nlohmann::json metric_json(const MetricSummary& m) {
  return {{"mean", m.mean ? nlohmann::json(*m.mean) : nlohmann::json(nullptr)},
          {"std", m.std},
          {"count", m.count},
          {"excluded", m.excluded}};
}

}  // namespace

ReportSummary summarize(const std::vector<SliceResult>& rows) {
  return {summarize_one(rows, &SliceResult::dice), summarize_one(rows, &SliceResult::hd95)};
}

std::string report_csv(const std::vector<SliceResult>& rows) {
  std::string out = "slice,dice,hd95\n";
  for (const auto& r : rows) {
    out += std::to_string(r.slice_index) + "," + fmt(r.dice) + "," + fmt(r.hd95) + "\n";
  }
  return out;
}

nlohmann::json summary_json(const ReportSummary& summary) {
  return {{"dice", metric_json(summary.dice)}, {"hd95", metric_json(summary.hd95)}};
}

}  // namespace samihs
