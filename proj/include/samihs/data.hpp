#pragma once

// Slice preprocessing, augmentation, cross-validation folds, point-prompt
// sampling and dataset I/O.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "samihs/grid.hpp"
#include "samihs/metrics.hpp"
#include "samihs/prompt_mask_head.hpp"

namespace samihs {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No foreground pixel to place a prompt on.
class NoPromptError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SliceSample {
  Matrix image;  // normalized to [0, 1]
  Mask mask;
  std::string case_id;
  int slice_index = 0;
  Spacing spacing;
};

/// Pixels strictly above the slice minimum (the non-air region of a CT
/// slice). Falls back to every pixel when the slice is constant.
Mask default_foreground(const Matrix& raw);

/// Clip to the [0.5, 99.5] percentiles of the values under `fg` (the whole
/// slice when `fg` is null), then min-max scale to [0, 1]. A degenerate
/// range gives all zeros.
Matrix percentile_clip_normalize(const Matrix& raw, const Mask* fg = nullptr);

struct AugmentConfig {
  double shift_prob = 0.5;
  double max_shift_frac = 0.1;  // of the shorter side
  double rotate_prob = 0.5;
  double max_angle_deg = 15.0;
  double noise_prob = 0.5;
  double noise_sigma = 0.05;

  static AugmentConfig none() { return {0.0, 0.1, 0.0, 15.0, 0.0, 0.05}; }
};

struct SpatialTransform {
  int dx = 0;  // columns, positive moves content right
  int dy = 0;  // rows, positive moves content down
  double angle_deg = 0.0;
};

/// Integer shift with zero fill.
template <class T>
Grid<T> shift_grid(const Grid<T>& g, int dx, int dy) {
  Grid<T> out(g.rows(), g.cols());
  const auto rows = static_cast<long>(g.rows()), cols = static_cast<long>(g.cols());
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      const long sr = r - dy, sc = c - dx;
      if (sr >= 0 && sc >= 0 && sr < rows && sc < cols) {
        out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) =
            g(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
      }
    }
  return out;
}

/// Rotation about the slice center, zero outside the source.
Matrix rotate_bilinear(const Matrix& img, double angle_deg);
Mask rotate_nearest(const Mask& m, double angle_deg);
/// Shift then rotate.
Matrix apply_transform(const Matrix& img, const SpatialTransform& t);
Mask apply_transform(const Mask& m, const SpatialTransform& t);

/// Random draws made by `augment`, in order, from std::mt19937_64(seed) and
/// U = uniform_real_distribution(0, 1):
///   1. U < shift_prob  -> dx, dy ~ uniform_int(-m, m), m = floor(frac*min side)
///   2. U < rotate_prob -> angle ~ uniform_real(-max_angle, max_angle)
///   3. U < noise_prob  -> per pixel, row-major, normal(0, sigma)
/// The spatial transform hits image and mask alike; the noise is added to
/// the image only and re-clipped to [0, 1].
struct AugmentDraw {
  SpatialTransform transform;
  bool noise = false;
};

SliceSample augment(const SliceSample& sample, const AugmentConfig& config, std::uint64_t seed,
                    AugmentDraw* draw = nullptr);

/// Seed for sample `index` in `epoch`; independent of scheduling.
std::uint64_t sample_seed(std::uint64_t global_seed, std::uint64_t epoch, std::uint64_t index);

struct FoldSpec {
  int fold_index = 0;
  std::vector<std::size_t> train_ids;
  std::vector<std::size_t> val_ids;
};

inline constexpr int kNumFolds = 5;

/// Shuffle 0..n-1 and cut into 5 validation chunks; the first n % 5 chunks
/// get one extra sample.
std::vector<FoldSpec> make_folds(std::size_t num_samples, std::uint64_t seed);
/// Same, but whole groups (e.g. cases) move together.
std::vector<FoldSpec> make_grouped_folds(const std::vector<std::string>& groups,
                                         std::uint64_t seed);

enum class PromptMode { random, centroid };

/// Random: uniform over foreground pixels. Centroid: the foreground pixel
/// nearest the foreground centroid, ties to the first in raster order.
PointPrompt sample_point_prompt(const Mask& mask, PromptMode mode, std::uint64_t seed = 0);

struct Dataset {
  std::vector<SliceSample> samples;
};

/// Manifest: {"cases": [{"id": ..., "path": ..., "spacing": [row, col]}]},
/// paths relative to the manifest. Each case file is a named-array
/// container with image.{k} (float64) and mask.{k} (uint8), k = 0, 1, ...
/// Slices are normalized with percentile_clip_normalize on load. A directory
/// argument means its manifest.json.
Dataset load_dataset(const std::filesystem::path& path);

/// Write a synthetic head-CT-like dataset (bright elliptical lesions on a
/// soft-tissue disk) in the manifest format. Returns the manifest path.
std::filesystem::path write_toy_dataset(const std::filesystem::path& dir, std::size_t num_cases,
                                        std::size_t slices_per_case, std::size_t side,
                                        std::uint64_t seed);

/// Binary PGM (P5, 8-bit).
void write_pgm(const std::filesystem::path& path, const Mask& mask);
Matrix read_pgm(const std::filesystem::path& path);

}  // namespace samihs
