#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "samihs/data.hpp"
#include "samihs/losses.hpp"
#include "samihs/metrics.hpp"
#include "samihs/model.hpp"

namespace samihs {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// What a training sample with an empty mask uses as its prompt.
enum class EmptySlicePolicy {
  center,  // click the slice center; the loss then penalizes any foreground
  skip,    // drop the sample from its batch
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 2;
  double learning_rate = 5.0e-4;
  AdamConfig adam;
  LossWeights loss;
  bool enable_bd_loss = true;
  ModelConfig model;
  /// Validation fold in [0, 5); -1 trains and validates on every sample.
  int fold_index = 0;
  std::uint64_t seed = 0;
  bool augment = true;
  AugmentConfig augmentation;
  std::size_t val_interval = 1;  // epochs; 0 disables validation
  bool grouped_folds = false;    // keep each case inside one fold
  EmptySlicePolicy empty_slices = EmptySlicePolicy::center;
  std::string dataset;           // manifest path
  std::string output_dir = "runs";

  /// Throws ConfigError.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Reads a JSON config; relative `dataset` and `output_dir` paths are
/// resolved against the config file's directory. Throws ConfigError.
TrainConfig load_train_config(const std::filesystem::path& path);

class Adam {
 public:
  Adam(ParamList params, double lr, AdamConfig config = {});
  void zero_grad();
  /// Updates every parameter that received a gradient.
  void step();
  std::size_t steps() const { return t_; }

 private:
  ParamList params_;
  double lr_;
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  std::size_t t_ = 0;
};

using LogSink = std::function<void(const nlohmann::json&)>;

/// Train/validation ids for the configured fold.
FoldSpec resolve_fold(const TrainConfig& config, const Dataset& dataset);

struct TrainResult {
  NamedArrayFile best;  // best validation Dice (last epoch when validation is off)
  NamedArrayFile last;
  std::vector<double> epoch_losses;
  double best_val_dice = -1.0;
  int best_epoch = -1;
  std::size_t steps = 0;
  std::size_t skipped_batches = 0;
};

/// Hook called after every optimizer step with the live model.
using StepHook = std::function<void(const Model&, std::size_t step)>;

TrainResult train(const TrainConfig& config, const Dataset& dataset, const LogSink& log = {},
                  const StepHook& on_step = {});

/// Centroid prompt, or the slice center when the mask is empty.
PointPrompt evaluation_prompt(const Mask& gt);

struct SliceEvaluation {
  std::string case_id;
  SliceResult result;
  PointPrompt prompt;
  bool prompt_fallback = false;
};

struct EvaluationReport {
  std::vector<SliceEvaluation> slices;
  ReportSummary summary;          // mean over slices
  std::optional<double> pooled_dice;  // 2*sum|P n G| / (sum|P| + sum|G|)

  /// Per-case `slice,dice,hd95` tables, keyed by case id.
  std::map<std::string, std::string> case_csv() const;
  nlohmann::json summary_json() const;
};

/// Thresholded (0.5) predictions with centroid prompts. Throws DataError on
/// an empty id list.
EvaluationReport evaluate(const Model& model, const Dataset& dataset,
                          const std::vector<std::size_t>& ids);

}  // namespace samihs
