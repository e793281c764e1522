#include "samihs/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <random>

namespace samihs {

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (fold_index < -1 || fold_index >= kNumFolds) throw ConfigError("fold_index must be in [-1, 5)");
  try {
    loss.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  model.validate();
}

namespace {

const char* policy_name(EmptySlicePolicy p) {
  return p == EmptySlicePolicy::center ? "center" : "skip";
}

}  // namespace

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
       {"loss", {{"lambda_bd", c.loss.lambda_bd}, {"lambda_ce", c.loss.lambda_ce}}},
       {"enable_bd_loss", c.enable_bd_loss},
       {"model", c.model},
       {"fold_index", c.fold_index},
       {"seed", c.seed},
       {"augment", c.augment},
       {"augmentation",
        {{"shift_prob", c.augmentation.shift_prob},
         {"max_shift_frac", c.augmentation.max_shift_frac},
         {"rotate_prob", c.augmentation.rotate_prob},
         {"max_angle_deg", c.augmentation.max_angle_deg},
         {"noise_prob", c.augmentation.noise_prob},
         {"noise_sigma", c.augmentation.noise_sigma}}},
       {"val_interval", c.val_interval},
       {"grouped_folds", c.grouped_folds},
       {"empty_slices", policy_name(c.empty_slices)},
       {"dataset", c.dataset},
       {"output_dir", c.output_dir}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  if (j.contains("adam")) {
    const auto& a = j["adam"];
    c.adam = {a.value("beta1", d.adam.beta1), a.value("beta2", d.adam.beta2),
              a.value("eps", d.adam.eps)};
  }
  if (j.contains("loss")) {
    const auto& l = j["loss"];
    c.loss = {l.value("lambda_bd", d.loss.lambda_bd), l.value("lambda_ce", d.loss.lambda_ce)};
  }
  c.enable_bd_loss = j.value("enable_bd_loss", d.enable_bd_loss);
  c.model = j.contains("model") ? j["model"].get<ModelConfig>() : d.model;
  c.fold_index = j.value("fold_index", d.fold_index);
  c.seed = j.value("seed", d.seed);
  c.augment = j.value("augment", d.augment);
  if (j.contains("augmentation")) {
    const auto& a = j["augmentation"];
    const auto& da = d.augmentation;
    c.augmentation = {a.value("shift_prob", da.shift_prob),
                      a.value("max_shift_frac", da.max_shift_frac),
                      a.value("rotate_prob", da.rotate_prob),
                      a.value("max_angle_deg", da.max_angle_deg),
                      a.value("noise_prob", da.noise_prob),
                      a.value("noise_sigma", da.noise_sigma)};
  }
  c.val_interval = j.value("val_interval", d.val_interval);
  c.grouped_folds = j.value("grouped_folds", d.grouped_folds);
  const std::string policy = j.value("empty_slices", std::string(policy_name(d.empty_slices)));
  if (policy == "center") {
    c.empty_slices = EmptySlicePolicy::center;
  } else if (policy == "skip") {
    c.empty_slices = EmptySlicePolicy::skip;
  } else {
    throw ConfigError("empty_slices must be 'center' or 'skip'");
  }
  c.dataset = j.value("dataset", d.dataset);
  c.output_dir = j.value("output_dir", d.output_dir);
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  TrainConfig c;
  try {
    c = nlohmann::json::parse(f).get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad config " + path.string() + ": " + e.what());
  }
  for (std::string* p : {&c.dataset, &c.output_dir}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) {
      *p = (path.parent_path() / *p).lexically_normal().string();
    }
  }
  return c;
}

Adam::Adam(ParamList params, double lr, AdamConfig config)
    : params_(std::move(params)), lr_(lr), cfg_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var.rows(), p.var.cols());
    v_.emplace_back(p.var.rows(), p.var.cols());
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    ag::Var& p = params_[k].var;
    const Matrix& g = p.grad();
    if (g.empty()) continue;
    Matrix& w = p.mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
      v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      w[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + cfg_.eps);
    }
  }
}

FoldSpec resolve_fold(const TrainConfig& config, const Dataset& dataset) {
  const std::size_t n = dataset.samples.size();
  if (n == 0) throw DataError("dataset is empty");
  if (config.fold_index < 0) {
    FoldSpec all;
    all.fold_index = -1;
    for (std::size_t i = 0; i < n; ++i) all.train_ids.push_back(i);
    all.val_ids = all.train_ids;
    return all;
  }
  std::vector<FoldSpec> folds;
  try {
    if (config.grouped_folds) {
      std::vector<std::string> groups;
      for (const auto& s : dataset.samples) groups.push_back(s.case_id);
      folds = make_grouped_folds(groups, config.seed);
    } else {
      folds = make_folds(n, config.seed);
    }
  } catch (const ContractViolation& e) {
    throw DataError(e.what());
  }
  return folds.at(static_cast<std::size_t>(config.fold_index));
}

PointPrompt evaluation_prompt(const Mask& gt) {
  if (count_foreground(gt) == 0) {
    return {static_cast<int>(gt.cols() / 2), static_cast<int>(gt.rows() / 2)};
  }
  return sample_point_prompt(gt, PromptMode::centroid);
}

std::map<std::string, std::string> EvaluationReport::case_csv() const {
  std::map<std::string, std::vector<SliceResult>> rows;
  for (const auto& s : slices) rows[s.case_id].push_back(s.result);
  std::map<std::string, std::string> out;
  for (auto& [id, r] : rows) {
    std::sort(r.begin(), r.end(),
              [](const SliceResult& a, const SliceResult& b) { return a.slice_index < b.slice_index; });
    out[id] = report_csv(r);
  }
  return out;
}

nlohmann::json EvaluationReport::summary_json() const {
  nlohmann::json j = samihs::summary_json(summary);
  j["pooled_dice"] = pooled_dice ? nlohmann::json(*pooled_dice) : nlohmann::json(nullptr);
  j["slices"] = slices.size();
  std::size_t fallback = 0;
  for (const auto& s : slices) fallback += s.prompt_fallback;
  j["empty_gt_slices"] = fallback;
  return j;
}

EvaluationReport evaluate(const Model& model, const Dataset& dataset,
                          const std::vector<std::size_t>& ids) {
  if (ids.empty()) throw DataError("validation fold is empty");
  EvaluationReport rep;
  rep.slices.resize(ids.size());
  std::vector<std::size_t> inter(ids.size()), psum(ids.size()), gsum(ids.size());
  for (auto id : ids) {
    if (id >= dataset.samples.size()) throw DataError("sample id " + std::to_string(id) + " out of range");
  }
  const auto n = static_cast<std::ptrdiff_t>(ids.size());
  std::exception_ptr failure;  // exceptions must not escape the parallel region
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) try {
    const auto k = static_cast<std::size_t>(i);
    const SliceSample& s = dataset.samples[ids[k]];
    const PointPrompt p = evaluation_prompt(s.mask);
    const Mask pred = threshold(full_forward(s.image, p, model).full_res_probs);
    SliceEvaluation& out = rep.slices[k];
    out.case_id = s.case_id;
    out.prompt = p;
    out.prompt_fallback = count_foreground(s.mask) == 0;
    out.result = {s.slice_index, dice_score(pred, s.mask), hd95(pred, s.mask, s.spacing)};
    for (std::size_t j = 0; j < pred.size(); ++j) {
      inter[k] += pred[j] && s.mask[j];
      psum[k] += pred[j] != 0;
      gsum[k] += s.mask[j] != 0;
    }
  } catch (...) {
#pragma omp critical(samihs_evaluate_failure)
    if (!failure) failure = std::current_exception();
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<SliceResult> rows;
  std::size_t ti = 0, tp = 0, tg = 0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    rows.push_back(rep.slices[k].result);
    ti += inter[k];
    tp += psum[k];
    tg += gsum[k];
  }
  rep.summary = summarize(rows);
  if (tp + tg > 0) rep.pooled_dice = 2.0 * static_cast<double>(ti) / static_cast<double>(tp + tg);
  return rep;
}

TrainResult train(const TrainConfig& config, const Dataset& dataset, const LogSink& log,
                  const StepHook& on_step) {
  config.validate();
  const FoldSpec fold = resolve_fold(config, dataset);
  if (fold.train_ids.empty()) throw DataError("training split is empty");
  auto emit = [&](nlohmann::json j) {
    if (log) log(j);
  };

  Model model = Model::build(config.model, config.seed);
  Adam adam(model.trainable(), config.learning_rate, config.adam);
  const nlohmann::json cfg_json = config;
  auto checkpoint = [&](int epoch, const nlohmann::json& metrics) {
    return export_checkpoint(
        model, {{"format", "samihs-checkpoint/1"}, {"config", cfg_json}, {"epoch", epoch},
                {"seed", config.seed}, {"fold", fold.fold_index}, {"metrics", metrics}});
  };

  TrainResult result;
  emit({{"event", "start"},
        {"fold", fold.fold_index},
        {"train_samples", fold.train_ids.size()},
        {"val_samples", fold.val_ids.size()},
        {"params", model.report().to_json()}});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = fold.train_ids;
    std::mt19937_64 shuffle_rng(sample_seed(config.seed, epoch, std::numeric_limits<std::uint64_t>::max()));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t loss_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<ag::Var> losses;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t id = order[b];
        const std::uint64_t seed = sample_seed(config.seed, epoch, id);
        SliceSample s = config.augment ? augment(dataset.samples[id], config.augmentation, seed)
                                       : dataset.samples[id];
        PointPrompt prompt;
        if (count_foreground(s.mask) > 0) {
          prompt = sample_point_prompt(s.mask, PromptMode::random, seed ^ 0x5bd1e995ULL);
        } else if (config.empty_slices == EmptySlicePolicy::center) {
          prompt = evaluation_prompt(s.mask);
        } else {
          continue;
        }
        const auto out = model.forward(s.image, prompt);
        losses.push_back(config.enable_bd_loss ? combo_loss(out.probs, s.mask, config.loss)
                                               : bce_loss(out.probs, s.mask));
      }
      if (losses.empty()) {
        ++result.skipped_batches;
        emit({{"event", "warning"},
              {"epoch", epoch},
              {"message", "batch skipped: no sample with a usable prompt"}});
        continue;
      }
      ag::Var total = losses.front();
      for (std::size_t k = 1; k < losses.size(); ++k) total = ag::add(total, losses[k]);
      total = ag::scale(total, 1.0 / static_cast<double>(losses.size()));
      adam.zero_grad();
      ag::backward(total);
      adam.step();
      ++result.steps;
      if (on_step) on_step(model, result.steps);
      loss_sum += total.scalar();
      ++loss_batches;
    }

    const double epoch_loss =
        loss_batches ? loss_sum / static_cast<double>(loss_batches) : std::nan("");
    result.epoch_losses.push_back(epoch_loss);
    nlohmann::json rec = {{"event", "epoch"}, {"epoch", epoch}, {"loss", epoch_loss}};

    const bool last_epoch = epoch + 1 == config.epochs;
    const bool validate_now = config.val_interval > 0 && !fold.val_ids.empty() &&
                              ((epoch + 1) % config.val_interval == 0 || last_epoch);
    if (validate_now) {
      const auto rep = evaluate(model, dataset, fold.val_ids);
      const double dice = rep.summary.dice.mean.value_or(0.0);
      rec["val_dice"] = dice;
      rec["val_hd95"] = rep.summary.hd95.mean ? nlohmann::json(*rep.summary.hd95.mean)
                                              : nlohmann::json(nullptr);
      if (dice > result.best_val_dice) {
        result.best_val_dice = dice;
        result.best_epoch = static_cast<int>(epoch);
        result.best = checkpoint(static_cast<int>(epoch), rep.summary_json());
      }
    }
    emit(rec);
    if (last_epoch) {
      result.last = checkpoint(static_cast<int>(epoch), {{"loss", epoch_loss}});
      if (result.best_epoch < 0) {
        result.best = result.last;
        result.best_epoch = static_cast<int>(epoch);
      }
    }
  }
  emit({{"event", "done"},
        {"steps", result.steps},
        {"best_epoch", result.best_epoch},
        {"best_val_dice", result.best_val_dice}});
  return result;
}

}  // namespace samihs
