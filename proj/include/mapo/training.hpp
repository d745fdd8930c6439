// Per-role optimisation with Adam and teacher forcing, per-epoch validation
// and checkpoints, model selection, and the plain-text run configuration.
#pragma once

#include "mapo/policy.hpp"
#include "mapo/rollout.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mapo {

enum class SelectionMetric { kPositionL2, kLoss };

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
  int role = 0;
  Sport sport = Sport::kBasketball;
  ConstraintPreset preset = ConstraintPreset::kVrnn;
  PolicyConfig policy;
  /// Validation rollouts used for model selection.
  SelectionMetric metric = SelectionMetric::kPositionL2;
  int burn_in = 20;
  int horizon = 60;
  int val_samples = 1;
  /// Directory for metrics.csv and checkpoints; empty keeps everything in memory.
  std::string out_dir;

  void validate() const;
};

/// key = value lines; '#' starts a comment. Unknown keys and bad values are
/// ConfigError with the line number. Keys are listed in the README.
TrainConfig parse_train_config(std::istream& in);
TrainConfig load_train_config(const std::string& path);
/// Applies one key/value pair (used by the parser and CLI overrides).
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
/// Canonical text form; parsing it yields an equal configuration.
std::string config_text(const TrainConfig& cfg);
nlohmann::ordered_json config_json(const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  LossValues train;
  LossValues val;
  double val_score = 0.0;
};

struct ScoredCheckpoint {
  int epoch = 0;
  double val_score = 0.0;
  std::string path;  // empty when kept in memory
  nlohmann::ordered_json checkpoint;
};

struct TrainResult {
  std::unique_ptr<PolicyModel> model;  // weights after the last epoch
  std::vector<EpochRecord> history;
  std::vector<ScoredCheckpoint> checkpoints;
  std::size_t best = 0;  // index into checkpoints
  std::string metrics_path;
};

/// Trains config.role's model. Every logged step checks
/// total = recon + kl + penalties + macro_weight * macro_ce to 1e-6; a
/// non-finite loss raises TrainingError after dumping the batch.
TrainResult train_policy(const TrainConfig& config, std::span<const PreparedWindow> train,
                         std::span<const PreparedWindow> val);

/// Teacher-forced objective of a model over windows in evaluation mode,
/// summed over windows; parameters and statistics are left untouched.
LossValues evaluate_loss(PolicyModel& model, std::span<const PreparedWindow> windows,
                         int batch_size, std::uint64_t seed);

/// Mean best-of-N position L2 of a single-role rollout (other agents replay
/// ground truth) over the windows.
double validation_position_l2(PolicyModel& model, std::span<const PreparedWindow> windows,
                              int burn_in, int horizon, int samples, std::uint64_t seed);

/// Lowest val_score wins; ties go to the earliest epoch.
std::size_t select_best(std::span<const ScoredCheckpoint> checkpoints);
/// Loads each checkpoint file and scores it on the validation windows.
std::size_t select_best(std::span<const std::string> paths,
                        std::span<const PreparedWindow> val, const TrainConfig& config);

/// Long-format metrics CSV: epoch,split,term,value. Only the terms present in
/// the objective are written.
void write_metrics_header(std::ostream& out);
void write_metrics_rows(std::ostream& out, const EpochRecord& rec, const PolicyConfig& cfg,
                        bool has_val);

}  // namespace mapo
