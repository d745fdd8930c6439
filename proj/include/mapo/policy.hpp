// Per-role hierarchical VRNN policy with velocity/acceleration actions,
// optional binary observation gate and macro-goal head, the RNN-Gauss
// baseline (no latent), the training objective and checkpoints.
#pragma once

#include "mapo/constraints.hpp"
#include "mapo/macro_goal.hpp"
#include "mapo/nn.hpp"
#include "mapo/observation.hpp"
#include "mapo/trajectory.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mapo {

/// Per-agent features in the state vector: position, velocity, acceleration.
inline constexpr int kStateDim = 6;
/// Action: velocity (2) then acceleration (2).
inline constexpr int kActionDim = 4;
/// Added to latent standard deviations so they never underflow to zero.
inline constexpr double kLatentStdFloor = 1e-6;

struct PolicyConfig {
  int slots = 11;  // agents in the state, self and ball included
  int embed_dim = 32;
  int hidden = 64;
  int latent = 64;
  int gru_hidden = 100;
  int gru_layers = 2;
  bool batch_norm = true;
  double dropout = 0.5;
  double std_floor = 1e-4;
  bool use_latent = true;  // false gives the RNN-Gauss baseline
  bool use_gate = false;   // binary partial observation
  bool use_macro = false;
  GridSpec grid = default_grid(Sport::kBasketball);
  LabelOptions labels;
  double macro_weight = 1.0;
  double temperature = 1.0;
  double dt = 0.1;
  ConstraintConfig constraints;

  void validate() const;
  int obs_dim() const { return slots * embed_dim; }
  /// Width of [h, o, g'] fed to prior, encoder and decoder.
  int context_dim() const;
  /// Display name such as "VRNN-macro-Bi-Mech" or "RNN-Gauss".
  std::string variant_name() const;
};

nlohmann::ordered_json to_json(const PolicyConfig& c);
PolicyConfig policy_config_from_json(const nlohmann::json& j);

/// Normalisation constants fitted on training windows.
struct FeatureScaling {
  ad::RowVector state_mean = ad::RowVector::Zero(kStateDim);
  ad::RowVector state_std = ad::RowVector::Ones(kStateDim);
  ad::RowVector action_scale = ad::RowVector::Ones(kActionDim);
};

/// A window flattened for batching: row t of `state` holds every slot's
/// (x, y, vx, vy, ax, ay); goals[d][t] is defender d's macro-goal label.
struct PreparedWindow {
  std::string sequence_id;
  ad::Matrix state;
  std::vector<std::vector<int>> goals;
  double dt = 0.1;

  int frames() const { return static_cast<int>(state.rows()); }
  int slots() const { return static_cast<int>(state.cols() / kStateDim); }
};

/// Expects agents in canonical order (defense, offense, ball).
PreparedWindow prepare_window(const PlaySequence& seq, const GridSpec& grid,
                              const LabelOptions& labels);

FeatureScaling fit_scaling(std::span<const PreparedWindow> windows, int role);

/// Terms of one batch objective. Penalty vars are only valid when enabled.
struct LossTerms {
  ad::Var recon;
  ad::Var kl;
  std::array<ad::Var, 4> penalty;
  ad::Var macro_ce;
  ad::Var total;
};

struct LossValues {
  double recon = 0.0;
  double kl = 0.0;
  PenaltyValues penalties;
  double macro_ce = 0.0;
  double total = 0.0;
  long windows = 0;

  LossValues& operator+=(const LossValues& o);
  /// total - (recon + kl + penalties + macro_weight * macro_ce).
  double decomposition_gap(double macro_weight) const;
};

LossValues loss_values(const LossTerms& terms, long windows);

class PolicyModel {
 public:
  static constexpr int kCheckpointVersion = 1;

  PolicyModel(const PolicyConfig& config, int role, nn::Rng& rng);
  PolicyModel(const PolicyModel&) = delete;
  PolicyModel& operator=(const PolicyModel&) = delete;

  const PolicyConfig& config() const { return config_; }
  int role() const { return role_; }
  FeatureScaling& scaling() { return scaling_; }
  const FeatureScaling& scaling() const { return scaling_; }
  /// Stores the scaling and sets the decoder output scale to action_scale.
  void set_scaling(const FeatureScaling& s);

  ad::Matrix normalize_state(const ad::Matrix& raw) const;
  ad::Matrix normalize_action(const ad::Matrix& raw) const;

  /// Gaussian over z_t from [h_{t-1}, o_{t-1}, g'_t].
  nn::GaussianOut prior_step(ad::Tape& tape, const ad::Var& h_top, const ad::Var& o,
                             const ad::Var& g, const nn::Context& ctx);
  /// Gaussian over z_t from [a_t, h_{t-1}, o_{t-1}, g'_t].
  nn::GaussianOut posterior_step(ad::Tape& tape, const ad::Var& a_norm,
                                 const ad::Var& h_top, const ad::Var& o,
                                 const ad::Var& g, const nn::Context& ctx);
  /// Gaussian over the physical action (vx, vy, ax, ay). z is ignored
  /// without a latent.
  nn::GaussianOut decode_action(ad::Tape& tape, const ad::Var& z, const ad::Var& h_top,
                                const ad::Var& o, const ad::Var& g,
                                const nn::Context& ctx);
  /// h_t = GRU([a_t, z_t], h_{t-1}).
  std::vector<ad::Var> recurrence(ad::Tape& tape, const ad::Var& a_norm,
                                  const ad::Var& z, const std::vector<ad::Var>& h);

  /// Gated observation of a normalised state. Without a gate b is all ones.
  ad::Var observe(ad::Tape& tape, const ad::Var& b, const ad::Var& state_norm);

  /// Teacher-forced objective over a batch of equal-length windows. Gumbel
  /// and latent noise are drawn from `noise`. Training mode uses the relaxed
  /// gate; evaluation mode uses hard samples.
  LossTerms sequence_loss(ad::Tape& tape, std::span<const PreparedWindow* const> windows,
                          const nn::Context& ctx, nn::Rng& noise);

  std::vector<ad::Parameter*> parameters();
  std::vector<nn::Buffer> buffers();
  std::size_t parameter_count();

  ObservationNet& observation() { return observation_; }
  MacroGoalNet& macro() { return macro_; }
  nn::GaussianMlp& prior_net() { return prior_; }
  nn::GaussianMlp& encoder_net() { return encoder_; }
  nn::GaussianMlp& decoder_net() { return decoder_; }
  nn::StackedGru& rnn() { return rnn_; }

 private:
  ad::Var context(ad::Tape& tape, std::initializer_list<ad::Var> parts);

  PolicyConfig config_;
  int role_;
  FeatureScaling scaling_;
  ObservationNet observation_;
  MacroGoalNet macro_;
  nn::GaussianMlp prior_;
  nn::GaussianMlp encoder_;
  nn::GaussianMlp decoder_;
  nn::StackedGru rnn_;
};

struct CheckpointMeta {
  int epoch = 0;
  long optimizer_step = 0;
  double val_score = 0.0;
  std::string rng_state;
  nlohmann::ordered_json train_config;
};

nlohmann::ordered_json checkpoint_json(PolicyModel& model, const CheckpointMeta& meta);
void save_checkpoint(const std::string& path, PolicyModel& model,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  std::unique_ptr<PolicyModel> model;
  CheckpointMeta meta;
};
LoadedCheckpoint checkpoint_from_json(const nlohmann::json& j);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace mapo
