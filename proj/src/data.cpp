#include "samihs/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "samihs/container.hpp"
#include "samihs/stats.hpp"

namespace samihs {

Mask default_foreground(const Matrix& raw) {
  if (raw.empty()) throw ContractViolation("default_foreground: empty image");
  const double lo = *std::min_element(raw.span().begin(), raw.span().end());
  Mask fg(raw.rows(), raw.cols());
  std::size_t n = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    fg[i] = raw[i] > lo ? 1 : 0;
    n += fg[i];
  }
  if (n == 0) fg.fill(1);
  return fg;
}

Matrix percentile_clip_normalize(const Matrix& raw, const Mask* fg) {
  if (raw.empty()) throw ContractViolation("percentile_clip_normalize: empty image");
  std::vector<double> vals;
  if (fg) {
    require_same_shape(raw, *fg, "percentile_clip_normalize");
    for (std::size_t i = 0; i < raw.size(); ++i)
      if ((*fg)[i]) vals.push_back(raw[i]);
    if (vals.empty()) vals = raw.values();
  } else {
    vals = raw.values();
  }
  const double lo = percentile_linear(vals, 0.5);
  const double hi = percentile_linear(std::move(vals), 99.5);
  Matrix out(raw.rows(), raw.cols());
  if (!(hi > lo)) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = (std::clamp(raw[i], lo, hi) - lo) / (hi - lo);
  }
  return out;
}

namespace {

struct RotationMap {
  double cr, cc, cs, sn;
  // Source coordinate of output pixel (r, c).
  std::pair<double, double> source(std::size_t r, std::size_t c) const {
    const double y = static_cast<double>(r) - cr, x = static_cast<double>(c) - cc;
    return {cr + cs * y - sn * x, cc + sn * y + cs * x};
  }
};

RotationMap rotation_map(std::size_t rows, std::size_t cols, double angle_deg) {
  const double a = angle_deg * std::numbers::pi / 180.0;
  return {(static_cast<double>(rows) - 1.0) / 2.0, (static_cast<double>(cols) - 1.0) / 2.0,
          std::cos(a), std::sin(a)};
}

}  // namespace

Matrix rotate_bilinear(const Matrix& img, double angle_deg) {
  const auto map = rotation_map(img.rows(), img.cols(), angle_deg);
  const auto rows = static_cast<long>(img.rows()), cols = static_cast<long>(img.cols());
  auto at = [&](long r, long c) {
    return (r >= 0 && c >= 0 && r < rows && c < cols)
               ? img(static_cast<std::size_t>(r), static_cast<std::size_t>(c))
               : 0.0;
  };
  Matrix out(img.rows(), img.cols());
  for (std::size_t r = 0; r < img.rows(); ++r)
    for (std::size_t c = 0; c < img.cols(); ++c) {
      const auto [sr, sc] = map.source(r, c);
      const auto r0 = static_cast<long>(std::floor(sr)), c0 = static_cast<long>(std::floor(sc));
      const double tr = sr - static_cast<double>(r0), tc = sc - static_cast<double>(c0);
      const double top = at(r0, c0) + tc * (at(r0, c0 + 1) - at(r0, c0));
      const double bot = at(r0 + 1, c0) + tc * (at(r0 + 1, c0 + 1) - at(r0 + 1, c0));
      out(r, c) = top + tr * (bot - top);
    }
  return out;
}

Mask rotate_nearest(const Mask& m, double angle_deg) {
  const auto map = rotation_map(m.rows(), m.cols(), angle_deg);
  const auto rows = static_cast<long>(m.rows()), cols = static_cast<long>(m.cols());
  Mask out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const auto [sr, sc] = map.source(r, c);
      const long nr = std::lround(sr), nc = std::lround(sc);
      if (nr >= 0 && nc >= 0 && nr < rows && nc < cols) {
        out(r, c) = m(static_cast<std::size_t>(nr), static_cast<std::size_t>(nc));
      }
    }
  return out;
}

Matrix apply_transform(const Matrix& img, const SpatialTransform& t) {
  Matrix out = (t.dx || t.dy) ? shift_grid(img, t.dx, t.dy) : img;
  return t.angle_deg != 0.0 ? rotate_bilinear(out, t.angle_deg) : out;
}

Mask apply_transform(const Mask& m, const SpatialTransform& t) {
  Mask out = (t.dx || t.dy) ? shift_grid(m, t.dx, t.dy) : m;
  return t.angle_deg != 0.0 ? rotate_nearest(out, t.angle_deg) : out;
}

SliceSample augment(const SliceSample& sample, const AugmentConfig& config, std::uint64_t seed,
                    AugmentDraw* draw) {
  require_same_shape(sample.image, sample.mask, "augment");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentDraw d;
  if (unit(rng) < config.shift_prob) {
    const auto side = static_cast<double>(std::min(sample.image.rows(), sample.image.cols()));
    const int m = static_cast<int>(std::floor(config.max_shift_frac * side));
    std::uniform_int_distribution<int> shift(-m, m);
    d.transform.dx = shift(rng);
    d.transform.dy = shift(rng);
  }
  if (unit(rng) < config.rotate_prob) {
    std::uniform_real_distribution<double> angle(-config.max_angle_deg, config.max_angle_deg);
    d.transform.angle_deg = angle(rng);
  }
  SliceSample out = sample;
  out.image = apply_transform(sample.image, d.transform);
  out.mask = apply_transform(sample.mask, d.transform);
  if (unit(rng) < config.noise_prob) {
    d.noise = true;
    std::normal_distribution<double> noise(0.0, config.noise_sigma);
    for (auto& v : out.image.span()) v = std::clamp(v + noise(rng), 0.0, 1.0);
  }
  if (draw) *draw = d;
  return out;
}

std::uint64_t sample_seed(std::uint64_t global_seed, std::uint64_t epoch, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(global_seed) ^ epoch) ^ index);
}

namespace {

std::vector<std::size_t> chunk_sizes(std::size_t n) {
  std::vector<std::size_t> sizes(kNumFolds, n / kNumFolds);
  for (std::size_t k = 0; k < n % kNumFolds; ++k) ++sizes[k];
  return sizes;
}

}  // namespace

std::vector<FoldSpec> make_folds(std::size_t num_samples, std::uint64_t seed) {
  if (num_samples < static_cast<std::size_t>(kNumFolds)) {
    throw ContractViolation("make_folds: need at least 5 samples, got " +
                            std::to_string(num_samples));
  }
  std::vector<std::size_t> order(num_samples);
  for (std::size_t i = 0; i < num_samples; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<FoldSpec> folds;
  std::size_t start = 0;
  const auto sizes = chunk_sizes(num_samples);
  for (int k = 0; k < kNumFolds; ++k) {
    FoldSpec f;
    f.fold_index = k;
    const std::size_t end = start + sizes[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < num_samples; ++i) {
      (i >= start && i < end ? f.val_ids : f.train_ids).push_back(order[i]);
    }
    start = end;
    folds.push_back(std::move(f));
  }
  return folds;
}

std::vector<FoldSpec> make_grouped_folds(const std::vector<std::string>& groups,
                                         std::uint64_t seed) {
  const std::set<std::string> unique(groups.begin(), groups.end());
  std::vector<std::string> names(unique.begin(), unique.end());
  if (names.size() < static_cast<std::size_t>(kNumFolds)) {
    throw ContractViolation("make_grouped_folds: need at least 5 groups");
  }
  const auto group_folds = make_folds(names.size(), seed);
  std::vector<FoldSpec> folds;
  for (const auto& gf : group_folds) {
    std::set<std::string> val;
    for (auto g : gf.val_ids) val.insert(names[g]);
    FoldSpec f;
    f.fold_index = gf.fold_index;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      (val.count(groups[i]) ? f.val_ids : f.train_ids).push_back(i);
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

PointPrompt sample_point_prompt(const Mask& mask, PromptMode mode, std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::size_t>> fg;
  for (std::size_t r = 0; r < mask.rows(); ++r)
    for (std::size_t c = 0; c < mask.cols(); ++c)
      if (mask(r, c)) fg.emplace_back(r, c);
  if (fg.empty()) throw NoPromptError("sample_point_prompt: mask has no foreground");
  if (mode == PromptMode::random) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, fg.size() - 1);
    const auto [r, c] = fg[pick(rng)];
    return {static_cast<int>(c), static_cast<int>(r)};
  }
  double mr = 0.0, mc = 0.0;
  for (const auto& [r, c] : fg) {
    mr += static_cast<double>(r);
    mc += static_cast<double>(c);
  }
  mr /= static_cast<double>(fg.size());
  mc /= static_cast<double>(fg.size());
  double best = std::numeric_limits<double>::infinity();
  PointPrompt out;
  for (const auto& [r, c] : fg) {
    const double dr = static_cast<double>(r) - mr, dc = static_cast<double>(c) - mc;
    const double d = dr * dr + dc * dc;
    if (d < best) {
      best = d;
      out = {static_cast<int>(c), static_cast<int>(r)};
    }
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& path) {
  const auto manifest = std::filesystem::is_directory(path) ? path / "manifest.json" : path;
  std::ifstream f(manifest);
  if (!f) throw DataError("cannot open dataset manifest " + manifest.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad dataset manifest: " + std::string(e.what()));
  }
  if (!j.contains("cases") || !j["cases"].is_array()) {
    throw DataError("dataset manifest has no 'cases' array");
  }
  Dataset ds;
  for (const auto& c : j["cases"]) {
    const std::string id = c.value("id", "");
    const std::string rel = c.value("path", "");
    if (id.empty() || rel.empty()) throw DataError("dataset case needs 'id' and 'path'");
    Spacing sp;
    if (c.contains("spacing")) {
      const auto& s = c["spacing"];
      if (!s.is_array() || s.size() != 2) throw DataError("case " + id + ": bad spacing");
      sp = {s[0].get<double>(), s[1].get<double>()};
    }
    NamedArrayFile file;
    try {
      file = NamedArrayFile::load(manifest.parent_path() / rel);
    } catch (const ContainerError& e) {
      throw DataError("case " + id + ": " + e.what());
    }
    for (int k = 0; file.contains("image." + std::to_string(k)); ++k) {
      const std::string key = std::to_string(k);
      if (!file.contains("mask." + key)) throw DataError("case " + id + ": missing mask." + key);
      SliceSample s;
      const Matrix raw = file.matrix("image." + key);
      if (raw.empty()) throw DataError("case " + id + ": empty slice " + key);
      const Mask body = default_foreground(raw);
      s.image = percentile_clip_normalize(raw, &body);
      s.mask = file.mask("mask." + key);
      for (auto& v : s.mask.span()) v = v ? 1 : 0;
      if (!s.mask.same_shape(s.image)) throw DataError("case " + id + ": mask/image shape mismatch");
      s.case_id = id;
      s.slice_index = k;
      s.spacing = sp;
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

std::filesystem::path write_toy_dataset(const std::filesystem::path& dir, std::size_t num_cases,
                                        std::size_t slices_per_case, std::size_t side,
                                        std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 3.0);
  const double center = (static_cast<double>(side) - 1.0) / 2.0;
  const double head_r = 0.48 * static_cast<double>(side);
  nlohmann::json cases = nlohmann::json::array();
  for (std::size_t ci = 0; ci < num_cases; ++ci) {
    char id[32];
    std::snprintf(id, sizeof id, "case%03zu", ci);
    NamedArrayFile file;
    for (std::size_t k = 0; k < slices_per_case; ++k) {
      Matrix raw(side, side, -1000.0);
      Mask mask(side, side);
      const bool lesion = unit(rng) > 0.15;
      const double lr = center + (unit(rng) - 0.5) * 0.4 * static_cast<double>(side);
      const double lc = center + (unit(rng) - 0.5) * 0.4 * static_cast<double>(side);
      const double ar = 0.12 * static_cast<double>(side) * (1.0 + unit(rng));
      const double ac = 0.12 * static_cast<double>(side) * (1.0 + unit(rng));
      for (std::size_t r = 0; r < side; ++r)
        for (std::size_t c = 0; c < side; ++c) {
          const double y = static_cast<double>(r), x = static_cast<double>(c);
          if (std::hypot(y - center, x - center) > head_r) continue;
          raw(r, c) = 35.0 + noise(rng);
          const double e = std::pow((y - lr) / ar, 2) + std::pow((x - lc) / ac, 2);
          if (lesion && e <= 1.0) {
            raw(r, c) = 75.0 + noise(rng);
            mask(r, c) = 1;
          }
        }
      file.put("image." + std::to_string(k), raw);
      file.put("mask." + std::to_string(k), mask);
    }
    const std::string name = std::string(id) + ".ntc";
    file.save(dir / name);
    cases.push_back({{"id", id}, {"path", name}, {"spacing", {1.0, 1.0}}});
  }
  const auto manifest = dir / "manifest.json";
  write_text_file(manifest, nlohmann::json{{"cases", cases}}.dump(2) + "\n");
  return manifest;
}

void write_pgm(const std::filesystem::path& path, const Mask& mask) {
  std::string out = "P5\n" + std::to_string(mask.cols()) + " " + std::to_string(mask.rows()) +
                    "\n255\n";
  for (auto v : mask.span()) out.push_back(static_cast<char>(v ? 255 : 0));
  write_text_file(path, out);
}

Matrix read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  auto next_token = [&](auto& v) {
    while (f >> std::ws && f.peek() == '#') f.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
    f >> v;
  };
  next_token(magic);
  next_token(w);
  next_token(h);
  next_token(maxval);
  if (!f || magic != "P5" || w == 0 || h == 0 || maxval == 0 || maxval > 255) {
    throw DataError("unsupported PGM (need 8-bit P5): " + path.string());
  }
  f.get();
  std::vector<unsigned char> buf(w * h);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw DataError("truncated PGM: " + path.string());
  Matrix m(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) m[i] = buf[i];
  return m;
}

}  // namespace samihs
