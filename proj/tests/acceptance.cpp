// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Usage: acceptance [scratch_dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "samihs/trainer.hpp"

using namespace samihs;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const Dataset& toy_dataset() {
  static const Dataset ds = load_dataset(write_toy_dataset(g_work / "toy", 5, 2, 16, 11));
  return ds;
}

Dataset first_nonempty(std::size_t n) {
  Dataset out;
  for (const auto& s : toy_dataset().samples)
    if (count_foreground(s.mask) > 0 && out.samples.size() < n) out.samples.push_back(s);
  return out;
}

std::map<std::string, std::uint64_t> component_hashes(const Model& m) {
  ParamList enc, bank, prompt, dec;
  m.encoder.collect(enc);
  m.bank.collect(bank);
  m.prompt.collect(prompt);
  m.decoder.collect(dec);
  return {{"encoder", hash_tensors(enc)}, {"adapter", hash_tensors(bank)},
          {"prompt", hash_tensors(prompt)}, {"decoder", hash_tensors(dec)},
          {"buffers", hash_tensors(m.buffers())}};
}

// 1
Outcome adapter_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Model m = Model::build(ModelConfig{}, seed);
    for (int k = 0; k < 3; ++k) {
      const Matrix x = oracle::random_matrix(16, 16, rng, 0, 1);
      if (!(encode_image(x, m.encoder, &m.bank).tokens.value() ==
            encode_image(x, m.encoder, nullptr).tokens.value()))
        return {false, "embedding differs for seed " + std::to_string(seed)};
      ++checked;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {secs < 1.0, std::to_string(checked) + " images bitwise equal in " + fmt("%.3f s", secs)};
}

// 2
Outcome adapter_oracle() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> dim(1, 16), tok(1, 8);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t c = dim(rng), cp = std::uniform_int_distribution<std::size_t>(1, c)(rng), n = tok(rng);
    const SharedProjection p{ag::parameter(oracle::random_matrix(c, cp, rng)),
                             ag::parameter(oracle::random_matrix(cp, c, rng))};
    const LayerFactors f{ag::parameter(oracle::random_matrix(1, cp, rng)),
                         ag::parameter(oracle::random_matrix(1, c, rng))};
    const Matrix x = oracle::random_matrix(n, c, rng);
    const Matrix got = pr_adapter_forward(x, p, f);
    const auto want = oracle::adapter(oracle::to_mat(x), oracle::to_mat(p.w_down.value()),
                                      oracle::to_mat(f.scale.value())[0], oracle::to_mat(p.w_up.value()),
                                      oracle::to_mat(f.shift.value())[0]);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) worst = std::max(worst, std::abs(got(i, j) - want[i][j]));
  }
  return {worst <= 1e-9, "100 instances, max abs err " + fmt("%.2e", worst)};
}

// 3
Outcome weight_sharing() {
  const std::size_t L = 4;
  auto bank = PRAdapterBank::init(AdapterConfig{12, 3, L}, 3);
  std::mt19937_64 rng(3);
  for (auto pos : {AdapterPosition::mha, AdapterPosition::mlp})
    for (std::size_t l = 0; l < L; ++l) {
      auto f = bank.factors(pos, l);
      f.scale.mutable_value() = oracle::random_matrix(1, 3, rng, 0.5, 1.5);
    }
  const Matrix x = oracle::random_matrix(6, 12, rng);
  auto outputs = [&](AdapterPosition pos) {
    std::vector<Matrix> o;
    for (std::size_t l = 0; l < L; ++l) o.push_back(bank.apply(pos, l, ag::constant(x)).value());
    return o;
  };
  for (auto pos : {AdapterPosition::mha, AdapterPosition::mlp}) {
    const std::string name = position_name(pos);
    const auto before = outputs(pos);
    auto proj = bank.projection(pos);
    proj.w_down.mutable_value()(4, 1) += 0.1;
    const auto after = outputs(pos);
    for (std::size_t l = 0; l < L; ++l)
      if (after[l] == before[l]) return {false, name + " W_down change missed layer " + std::to_string(l)};
    for (std::size_t i = 0; i < L; ++i) {
      const auto ref = outputs(pos);
      auto f = bank.factors(pos, i);
      f.scale.mutable_value()[1] += 0.2;
      const auto now = outputs(pos);
      for (std::size_t l = 0; l < L; ++l)
        if ((now[l] == ref[l]) == (l == i))
          return {false, name + " R of layer " + std::to_string(i) + " leaked into layer " + std::to_string(l)};
    }
  }
  return {true, "L=4, both positions: shared W_down reaches all layers, R_l stays local"};
}

// 4
Outcome parameter_count() {
  if (count_trainable_params(PRAdapterBank::init(AdapterConfig{4, 2, 3}, 0)) != 68) return {false, "hand example != 68"};
  std::mt19937_64 rng(4);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 50; ++t) {
    AdapterConfig cfg;
    cfg.channel_dim = std::uniform_int_distribution<std::size_t>(1, 48)(rng);
    cfg.bottleneck_dim = std::uniform_int_distribution<std::size_t>(1, cfg.channel_dim)(rng);
    cfg.num_layers = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    cfg.enable_mha_adapter = coin(rng);
    cfg.enable_mlp_adapter = coin(rng);
    const auto bank = PRAdapterBank::init(cfg, static_cast<std::uint64_t>(t));
    ParamList ps;
    bank.collect(ps);
    std::size_t live = 0;
    for (const auto& p : ps) live += p.var.value().size();
    const std::size_t want = oracle::adapter_param_enumeration(cfg.channel_dim, cfg.bottleneck_dim, cfg.num_layers,
                                                               cfg.enable_mha_adapter, cfg.enable_mlp_adapter);
    if (count_trainable_params(bank) != want || live != want)
      return {false, "config " + std::to_string(t) + " mismatch"};
  }
  return {true, "68-parameter example exact, 50 random configs match enumeration"};
}

// 5
Outcome freeze_policy() {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.fold_index = -1;
  cfg.seed = 5;
  const Dataset& ds = toy_dataset();  // 10 slices -> 5 steps
  const auto initial = component_hashes(Model::build(cfg.model, cfg.seed));
  std::size_t steps = 0;
  bool frozen_ok = true;
  std::map<std::string, bool> changed;
  train(cfg, ds, {}, [&](const Model& m, std::size_t) {
    ++steps;
    const auto now = component_hashes(m);
    frozen_ok = frozen_ok && now.at("encoder") == initial.at("encoder") && now.at("buffers") == initial.at("buffers");
    for (const char* k : {"adapter", "prompt", "decoder"}) changed[k] = changed[k] || now.at(k) != initial.at(k);
  });
  const bool ok = steps == 5 && frozen_ok && changed["adapter"] && changed["prompt"] && changed["decoder"];
  std::ostringstream d;
  d << steps << " steps, frozen hashes " << (frozen_ok ? "unchanged" : "CHANGED") << ", changed:";
  for (const char* k : {"adapter", "prompt", "decoder"}) d << ' ' << k << '=' << (changed[k] ? "yes" : "no");
  return {ok, d.str()};
}

// 6
Outcome loss_gradients() {
  std::mt19937_64 rng(6);
  double worst_bd = 0, worst_ce = 0;
  for (int t = 0; t < 20; ++t) {
    Mask g;
    do g = oracle::random_blobs(10, 10, rng, 2);
    while (count_foreground(g) == 0);
    Matrix p = oracle::random_matrix(10, 10, rng, 0.02, 0.98);
    const Matrix gbd = boundary_sensitive_loss_grad(p, g), gce = bce_loss_grad(p, g);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double nbd = oracle::central_difference([&] { return boundary_sensitive_loss(p, g); }, p[i], 1e-5);
      const double nce = oracle::central_difference([&] { return bce_loss(p, g); }, p[i], 1e-5);
      worst_bd = std::max(worst_bd, oracle::rel_err(gbd[i], nbd));
      worst_ce = std::max(worst_ce, oracle::rel_err(gce[i], nce));
    }
  }
  return {worst_bd <= 1e-4 && worst_ce <= 1e-4,
          "20 instances, max rel err L_bd " + fmt("%.2e", worst_bd) + ", L_ce " + fmt("%.2e", worst_ce)};
}

// 7
Outcome gamma_oracle() {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 200; ++t) {
    const Mask m = t % 2 ? oracle::random_mask(16, 16, rng, 0.05 + 0.004 * t) : oracle::random_blobs(16, 16, rng);
    const auto got = boundary_stats(m);
    const auto want = oracle::boundary_scan(m);
    const double gw = want.ts ? 1.0 - double(want.tc) / double(want.ts) : 1.0;
    if (got.boundary != want.tc || got.size != want.ts || got.gamma != gw)
      return {false, "random mask " + std::to_string(t) + " disagrees"};
  }
  for (std::size_t n = 2; n <= 20; ++n) {
    Mask sq(n + 2, n + 2);
    for (std::size_t r = 1; r <= n; ++r)
      for (std::size_t c = 1; c <= n; ++c) sq(r, c) = 1;
    const double dn = static_cast<double>(n);
    if (boundary_stats(sq).gamma != 1.0 - (4 * dn - 4) / (dn * dn)) return {false, "square n=" + std::to_string(n)};
  }
  return {true, "200 random 16x16 masks match scan, gamma(n) exact for n=2..20"};
}

// 8
Outcome loss_values() {
  Mask gt(5, 5);
  Matrix hard(5, 5);
  for (std::size_t r = 1; r < 4; ++r)
    for (std::size_t c = 1; c < 4; ++c) gt(r, c) = 1, hard(r, c) = 1.0;
  const double perfect = boundary_sensitive_loss(hard, gt);
  const double empty = boundary_sensitive_loss(Matrix(5, 5, 0.0), gt);
  const double half = boundary_sensitive_loss(Matrix(5, 5, 0.5), gt);
  const double combo = combo_loss(Matrix(5, 5, 0.5), gt, {0.5, 0.5});
  const double want_half = 1.0 - 1.0 / 13.5;
  const double want_combo = 0.5 * want_half + 0.5 * std::log(2.0);
  const double err = std::max({std::abs(perfect), std::abs(empty - 1.0), std::abs(half - want_half),
                               std::abs(combo - want_combo)});
  return {err <= 1e-6 && std::abs(half - 0.9259) < 5e-5 && std::abs(combo - 0.8095) < 5e-5,
          "L_bd " + fmt("%.6f", perfect) + " / " + fmt("%.6f", empty) + " / " + fmt("%.6f", half) + ", combo " +
              fmt("%.6f", combo)};
}

// 9
Outcome hd95_oracle() {
  std::mt19937_64 rng(9);
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    const Mask a = t % 3 ? oracle::random_blobs(12, 12, rng) : oracle::random_mask(12, 12, rng, 0.25);
    const Mask b = t % 4 ? oracle::random_blobs(12, 12, rng) : oracle::random_mask(12, 12, rng, 0.25);
    const auto got = hd95(a, b);
    const auto want = oracle::hd95(a, b);
    if (got.has_value() != want.has_value()) return {false, "definedness differs on pair " + std::to_string(t)};
    if (got) worst = std::max(worst, std::abs(*got - *want));
  }
  Mask a(12, 12), b(12, 12);
  a(5, 2) = 1;
  b(5, 5) = 1;
  const bool identical = hd95(a, a).value() == 0.0;
  const bool offset = hd95(a, b).value() == 3.0;
  return {worst <= 1e-9 && identical && offset,
          "200 pairs max abs err " + fmt("%.2e", worst) + ", identical=" + (identical ? "0" : "X") +
              ", 3-px offset=" + fmt("%.1f", hd95(a, b).value())};
}

// 10
Outcome overfit_harness() {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = first_nonempty(4);
  if (ds.samples.size() != 4) return {false, "toy set has fewer than 4 nonempty slices"};
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 4;  // one fixed batch
  cfg.learning_rate = 3e-3;
  cfg.augment = false;
  cfg.fold_index = -1;
  cfg.val_interval = 0;
  cfg.seed = 10;
  const auto r = train(cfg, ds);
  const double initial = r.epoch_losses.front(), final_loss = r.epoch_losses.back();
  const Model m = model_from_checkpoint(r.last);
  const auto rep = evaluate(m, ds, {0, 1, 2, 3});
  const double dice = rep.summary.dice.mean.value_or(0.0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = final_loss < 0.1 * initial && dice >= 0.95 && secs < 300.0 && r.epoch_losses.size() <= 200;
  return {ok, "loss " + fmt("%.4f", initial) + " -> " + fmt("%.4f", final_loss) + " (ratio " +
                  fmt("%.4f", final_loss / initial) + "), self-eval Dice " + fmt("%.4f", dice) + ", " +
                  fmt("%.1f s", secs)};
}

// 11
Outcome determinism() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.fold_index = 0;
  cfg.seed = 11;  // augmentation on: exercises every seeded draw
  const Dataset& ds = toy_dataset();
  const auto a = train(cfg, ds), b = train(cfg, ds);
  const bool ckpt = a.best.serialize() == b.best.serialize() && a.last.serialize() == b.last.serialize();
  const FoldSpec fold = resolve_fold(cfg, ds);
  const Model ma = model_from_checkpoint(a.best), mb = model_from_checkpoint(b.best);
  std::vector<std::size_t> all(ds.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto ea = evaluate(ma, ds, all), eb = evaluate(mb, ds, all);
  const auto fa = evaluate(ma, ds, fold.val_ids), fb = evaluate(mb, ds, fold.val_ids);
  // also through files, as the CLI writes them
  std::size_t files = 0;
  bool bytes_equal = true;
  for (const auto& [id, csv] : ea.case_csv()) {
    write_text_file(g_work / ("det_a_" + id + ".csv"), csv);
    write_text_file(g_work / ("det_b_" + id + ".csv"), eb.case_csv().at(id));
    std::ifstream x(g_work / ("det_a_" + id + ".csv"), std::ios::binary), y(g_work / ("det_b_" + id + ".csv"), std::ios::binary);
    bytes_equal = bytes_equal && std::string(std::istreambuf_iterator<char>(x), {}) ==
                                     std::string(std::istreambuf_iterator<char>(y), {});
    ++files;
  }
  const bool csv = ea.case_csv() == eb.case_csv() && fa.case_csv() == fb.case_csv() && bytes_equal;
  return {ckpt && csv, std::string("checkpoints ") + (ckpt ? "identical" : "DIFFER") + ", " + std::to_string(files) +
                           " case CSVs " + (csv ? "identical" : "DIFFER")};
}

// 12
Outcome ablation_matrix() {
  const Dataset ds = first_nonempty(4);
  std::ostringstream d;
  for (int combo = 0; combo < 8; ++combo) {
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 2;
    cfg.fold_index = -1;
    cfg.seed = 12;
    cfg.model.enable_mha_adapter = combo & 1;
    cfg.model.enable_mlp_adapter = combo & 2;
    cfg.enable_bd_loss = combo & 4;
    const Model fresh = Model::build(cfg.model, cfg.seed);
    const auto before = component_hashes(fresh);
    std::set<std::string> trainable;
    for (const auto& p : fresh.trainable()) trainable.insert(p.name);
    TrainResult r;
    try {
      r = train(cfg, ds);
    } catch (const std::exception& e) {
      return {false, "combo " + std::to_string(combo) + " threw: " + e.what()};
    }
    if (r.epoch_losses.size() != 1 || !std::isfinite(r.epoch_losses[0]))
      return {false, "combo " + std::to_string(combo) + " did not finish its epoch"};
    if (combo % 4 == 0) {  // both adapters off
      const auto after = component_hashes(model_from_checkpoint(r.last));
      for (const auto& n : trainable)
        if (n.rfind("prompt.", 0) != 0 && n.rfind("decoder.", 0) != 0)
          return {false, "adapters-off trains " + n};
      if (after.at("encoder") != before.at("encoder") || after.at("prompt") == before.at("prompt") ||
          after.at("decoder") == before.at("decoder") || fresh.report().adapter != 0)
        return {false, "adapters-off run touched the wrong components"};
    }
  }
  return {true, "8/8 (MHA, MLP, BD) combinations ran one epoch; adapters-off trains prompt+decoder only"};
}

}  // namespace

int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "samihs_acceptance";
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"adapter identity at init", adapter_identity},
      {"adapter forward vs scalar loop", adapter_oracle},
      {"cross-layer weight sharing", weight_sharing},
      {"adapter parameter count", parameter_count},
      {"freeze policy over 5 steps", freeze_policy},
      {"loss gradients vs finite differences", loss_gradients},
      {"gamma vs boundary scan", gamma_oracle},
      {"loss reference values", loss_values},
      {"HD95 vs all-pairs brute force", hd95_oracle},
      {"overfit harness", overfit_harness},
      {"seeded determinism", determinism},
      {"ablation matrix", ablation_matrix},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %2zu  %-38s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
