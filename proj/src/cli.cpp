#include "samihs/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "samihs/trainer.hpp"

namespace samihs::cli {
namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

PointPrompt parse_point(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw UsageError("--point expects X,Y");
  try {
    std::size_t used = 0;
    const int x = std::stoi(s.substr(0, comma), &used);
    if (used != comma) throw UsageError("--point expects X,Y");
    const std::string ys = s.substr(comma + 1);
    const int y = std::stoi(ys, &used);
    if (used != ys.size()) throw UsageError("--point expects X,Y");
    return {x, y};
  } catch (const std::logic_error&) {
    throw UsageError("--point expects integer X,Y, got '" + s + "'");
  }
}

struct SliceInput {
  Matrix raw;
  std::optional<Mask> gt;
};

SliceInput read_slice(const fs::path& path, int slice) {
  SliceInput in;
  if (path.extension() == ".pgm") {
    in.raw = read_pgm(path);
    return in;
  }
  NamedArrayFile f;
  try {
    f = NamedArrayFile::load(path);
  } catch (const ContainerError& e) {
    throw DataError(e.what());
  }
  const std::string key = std::to_string(slice);
  if (f.contains("image." + key)) {
    in.raw = f.matrix("image." + key);
    if (f.contains("mask." + key)) in.gt = f.mask("mask." + key);
  } else if (f.contains("image")) {
    in.raw = f.matrix("image");
    if (f.contains("mask")) in.gt = f.mask("mask");
  } else {
    throw DataError("no image." + key + " or image entry in " + path.string());
  }
  return in;
}

Mask read_gt(const fs::path& path, int slice) {
  if (path.extension() == ".pgm") return threshold(read_pgm(path), 128.0);
  SliceInput in = read_slice(path, slice);
  if (in.gt) return *in.gt;
  return threshold(in.raw, 0.5);
}

void print_line(std::ostream& out, const nlohmann::json& j) { out << j.dump() << "\n"; }

int cmd_train(const fs::path& config_path, std::optional<int> fold, std::optional<std::uint64_t> seed,
              std::optional<std::size_t> epochs, std::optional<double> lr, bool no_mha, bool no_mlp,
              bool no_bd, const std::string& out_dir, std::ostream& out) {
  TrainConfig cfg = load_train_config(config_path);
  if (fold) cfg.fold_index = *fold;
  if (seed) cfg.seed = *seed;
  if (epochs) cfg.epochs = *epochs;
  if (lr) cfg.learning_rate = *lr;
  if (no_mha) cfg.model.enable_mha_adapter = false;
  if (no_mlp) cfg.model.enable_mlp_adapter = false;
  if (no_bd) cfg.enable_bd_loss = false;
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  cfg.validate();
  if (cfg.dataset.empty()) throw ConfigError("config has no 'dataset' manifest path");
  const Dataset ds = load_dataset(cfg.dataset);

  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  std::string log_text;
  const auto result = train(cfg, ds, [&](const nlohmann::json& j) {
    print_line(out, j);
    log_text += j.dump() + "\n";
  });
  result.best.save(dir / "best.ckpt");
  result.last.save(dir / "last.ckpt");
  write_text_file(dir / "train_log.jsonl", log_text);
  print_line(out, {{"event", "saved"},
                   {"best", (dir / "best.ckpt").string()},
                   {"last", (dir / "last.ckpt").string()}});
  return kOk;
}

int cmd_eval(const fs::path& ckpt_path, int fold, const std::string& dataset_override,
             const std::string& out_dir, std::ostream& out) {
  const NamedArrayFile file = read_checkpoint(ckpt_path);
  const Model model = model_from_checkpoint(file);
  TrainConfig cfg;
  if (file.metadata.contains("config")) {
    try {
      cfg = file.metadata["config"].get<TrainConfig>();
    } catch (const std::exception& e) {
      throw CheckpointError(std::string("bad training config in checkpoint: ") + e.what());
    }
  }
  if (!dataset_override.empty()) cfg.dataset = dataset_override;
  if (cfg.dataset.empty()) throw UsageError("no dataset: pass --dataset");
  cfg.fold_index = fold;
  if (fold < -1 || fold >= kNumFolds) throw UsageError("--fold must be in [-1, 5)");
  const Dataset ds = load_dataset(cfg.dataset);
  const FoldSpec spec = resolve_fold(cfg, ds);
  const EvaluationReport rep = evaluate(model, ds, spec.val_ids);

  const fs::path dir = fs::path(out_dir.empty() ? ckpt_path.parent_path().string() : out_dir) /
                       ("eval_fold" + std::to_string(fold));
  fs::create_directories(dir);
  for (const auto& [id, csv] : rep.case_csv()) write_text_file(dir / (id + ".csv"), csv);
  nlohmann::json summary = rep.summary_json();
  summary["fold"] = fold;
  write_text_file(dir / "summary.json", summary.dump(2) + "\n");
  print_line(out, {{"event", "eval"}, {"dir", dir.string()}, {"summary", summary}});
  return kOk;
}

int cmd_predict(const fs::path& ckpt_path, const fs::path& image_path, const std::string& point,
                int slice, const std::string& gt_path, const std::string& prefix,
                std::ostream& out) {
  const PointPrompt p = parse_point(point);
  const NamedArrayFile file = read_checkpoint(ckpt_path);
  const Model model = model_from_checkpoint(file);
  SliceInput in = read_slice(image_path, slice);
  if (in.raw.rows() != model.input_size() || in.raw.cols() != model.input_size()) {
    throw DataError("image is " + shape_str(in.raw.rows(), in.raw.cols()) + ", model expects " +
                    shape_str(model.input_size(), model.input_size()));
  }
  if (p.x < 0 || p.y < 0 || static_cast<std::size_t>(p.x) >= in.raw.cols() ||
      static_cast<std::size_t>(p.y) >= in.raw.rows()) {
    throw UsageError("--point " + point + " is outside the " + shape_str(in.raw.rows(), in.raw.cols()) +
                     " image");
  }
  if (!gt_path.empty()) in.gt = read_gt(gt_path, slice);
  const Mask body = default_foreground(in.raw);
  const Matrix image = percentile_clip_normalize(in.raw, &body);
  const MaskPrediction pred = full_forward(image, p, model);
  const Mask mask = threshold(pred.full_res_probs);

  const std::string base = prefix.empty() ? "prediction" : prefix;
  NamedArrayFile probs;
  probs.metadata = {{"point", {p.x, p.y}}, {"checkpoint", ckpt_path.string()}};
  probs.put("prob", pred.full_res_probs);
  probs.put("low_res_logits", pred.low_res_logits);
  probs.put("mask", mask);
  write_pgm(base + "_mask.pgm", mask);
  probs.save(base + "_prob.ntc");

  nlohmann::json rec = {{"event", "predict"},
                        {"mask", base + "_mask.pgm"},
                        {"prob", base + "_prob.ntc"},
                        {"foreground_pixels", count_foreground(mask)}};
  if (in.gt) {
    if (!in.gt->same_shape(mask)) throw DataError("ground truth shape does not match image");
    rec["dice"] = dice_score(mask, *in.gt);
    const auto h = hd95(mask, *in.gt);
    rec["hd95"] = h ? nlohmann::json(*h) : nlohmann::json(nullptr);
  }
  print_line(out, rec);
  return kOk;
}

int cmd_params(const std::string& config_path, std::ostream& out) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = load_train_config(config_path);
  cfg.model.validate();
  const Model model = Model::build(cfg.model, cfg.seed);
  nlohmann::json j = model.report().to_json();
  j["adapter_closed_form"] = count_trainable_params(model.bank);
  j["event"] = "params";
  print_line(out, j);
  return kOk;
}

int cmd_import(const fs::path& source, const fs::path& mapping_path, const std::string& config_path,
               const std::string& out_path, std::ostream& out) {
  TrainConfig cfg;
  if (!config_path.empty()) cfg = load_train_config(config_path);
  std::ifstream mf(mapping_path);
  if (!mf) throw UsageError("cannot open mapping " + mapping_path.string());
  nlohmann::json mapping;
  try {
    mapping = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("bad mapping JSON: " + std::string(e.what()));
  }
  const NamedArrayFile src = read_checkpoint(source);
  Model model = Model::build(cfg.model, cfg.seed);
  const ImportResult r = import_pretrained(model, src, mapping);
  const std::string dest = out_path.empty() ? "imported.ckpt" : out_path;
  export_checkpoint(model, {{"format", "samihs-checkpoint/1"},
                            {"config", cfg},
                            {"imported_from", source.string()},
                            {"epoch", -1},
                            {"seed", cfg.seed}})
      .save(dest);
  print_line(out, {{"event", "import"}, {"loaded", r.loaded.size()}, {"checkpoint", dest}});
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Point-prompted segmentation fine-tuning with shared-weight adapters"};
  app.require_subcommand(1);

  std::string config, checkpoint, image, point, gt, prefix, source, mapping, out_dir, dataset;
  std::optional<int> fold_opt;
  std::optional<std::uint64_t> seed_opt;
  std::optional<std::size_t> epochs_opt;
  std::optional<double> lr_opt;
  bool no_mha = false, no_mlp = false, no_bd = false;
  int fold = 0, slice = 0;
  std::size_t toy_cases = 5, toy_slices = 4, toy_side = 16;
  std::uint64_t toy_seed = 0;

  auto* train_cmd = app.add_subcommand("train", "Fine-tune on a dataset fold");
  train_cmd->add_option("--config", config, "Training config (JSON)")->required();
  train_cmd->add_option("--fold", fold_opt, "Validation fold in [0,5), -1 for all samples");
  train_cmd->add_option("--seed", seed_opt, "Random seed");
  train_cmd->add_option("--epochs", epochs_opt);
  train_cmd->add_option("--lr", lr_opt);
  train_cmd->add_flag("--no-mha-adapter", no_mha);
  train_cmd->add_flag("--no-mlp-adapter", no_mlp);
  train_cmd->add_flag("--no-bd-loss", no_bd);
  train_cmd->add_option("--out", out_dir, "Output directory (overrides config)");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a validation fold");
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--fold", fold)->required();
  eval_cmd->add_option("--dataset", dataset, "Manifest (defaults to the training dataset)");
  eval_cmd->add_option("--out", out_dir);

  auto* predict_cmd = app.add_subcommand("predict", "Predict a mask for one slice and point");
  predict_cmd->add_option("--checkpoint", checkpoint)->required();
  predict_cmd->add_option("--image", image, "PGM or named-array container")->required();
  predict_cmd->add_option("--point", point, "X,Y in slice pixels")->required();
  predict_cmd->add_option("--slice", slice, "Slice index inside a case container");
  predict_cmd->add_option("--gt", gt, "Ground-truth mask (PGM or container)");
  predict_cmd->add_option("--out", prefix, "Output prefix");

  auto* params_cmd = app.add_subcommand("params", "Report parameter counts");
  params_cmd->add_option("--config", config);

  auto* import_cmd = app.add_subcommand("import", "Import pretrained tensors via a name mapping");
  import_cmd->add_option("--source", source)->required();
  import_cmd->add_option("--mapping", mapping)->required();
  import_cmd->add_option("--config", config);
  import_cmd->add_option("--out", out_dir, "Output checkpoint path");

  auto* toy_cmd = app.add_subcommand("make-toy", "Write a synthetic dataset");
  toy_cmd->add_option("--out", out_dir)->required();
  toy_cmd->add_option("--cases", toy_cases);
  toy_cmd->add_option("--slices", toy_slices);
  toy_cmd->add_option("--side", toy_side);
  toy_cmd->add_option("--seed", toy_seed);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kUsage;
  }

  try {
    if (*train_cmd) {
      return cmd_train(config, fold_opt, seed_opt, epochs_opt, lr_opt, no_mha, no_mlp, no_bd,
                       out_dir, out);
    }
    if (*eval_cmd) return cmd_eval(checkpoint, fold, dataset, out_dir, out);
    if (*predict_cmd) return cmd_predict(checkpoint, image, point, slice, gt, prefix, out);
    if (*params_cmd) return cmd_params(config, out);
    if (*import_cmd) return cmd_import(source, mapping, config, out_dir, out);
    if (*toy_cmd) {
      const auto manifest = write_toy_dataset(out_dir, toy_cases, toy_slices, toy_side, toy_seed);
      print_line(out, {{"event", "make-toy"}, {"manifest", manifest.string()}});
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kCheckpoint;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ContainerError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ContractViolation& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::ios_base::failure& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace samihs::cli
