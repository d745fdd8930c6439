// Role assignment: a diagonal-covariance Gaussian HMM fitted by Baum-Welch
// over per-agent features, and optimal reindexing of defender slots into
// roles by solving a linear assignment on emission costs.
#pragma once

#include "mapo/trajectory.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace mapo {

/// One observation sequence: rows are time steps, columns are features.
using FeatureSequence = Eigen::MatrixXd;

struct RoleModel {
  static constexpr int kVersion = 1;
  static constexpr double kVarianceFloor = 1e-4;

  int n_roles = 0;
  Eigen::VectorXd initial;     // simplex over roles
  Eigen::MatrixXd transition;  // row-stochastic
  Eigen::MatrixXd means;       // n_roles x dim
  Eigen::MatrixXd variances;   // n_roles x dim, each >= floor

  int dim() const { return static_cast<int>(means.cols()); }
  /// log N(x; mean_r, diag(var_r)).
  double log_density(int role, const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct HmmFitOptions {
  int max_iters = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

struct HmmFit {
  RoleModel model;
  std::vector<double> log_likelihood;  // one entry per EM iteration
  bool converged = false;
  std::vector<std::string> warnings;
};

/// Baum-Welch with scaled forward-backward. Initial means come from k-means++
/// followed by Lloyd refinement.
HmmFit fit_role_hmm(const std::vector<FeatureSequence>& sequences, int n_roles,
                    const HmmFitOptions& options = {});

/// Total log-likelihood of the sequences under the model.
double hmm_log_likelihood(const RoleModel& model,
                          const std::vector<FeatureSequence>& sequences);

struct FeatureOptions {
  /// Append position relative to the ball (6 dims instead of 4).
  bool ball_relative = false;
};

/// Per-defender features (position, velocity[, position - ball]) over time.
std::vector<FeatureSequence> defender_features(const PlaySequence& seq,
                                               const FeatureOptions& options = {});

/// Lower bound on per-step log density used by role_cost.
inline constexpr double kLogDensityFloor = -1e6;

/// cost(k, r) = sum_t -log N(feature of player k at t; role r).
Eigen::MatrixXd role_cost(const std::vector<FeatureSequence>& player_features,
                          const RoleModel& model);

/// Per-frame cost matrices (one K x K matrix per time step).
std::vector<Eigen::MatrixXd> role_cost_per_step(
    const std::vector<FeatureSequence>& player_features, const RoleModel& model);

struct Assignment {
  std::vector<int> role_of;  // row (player slot) -> column (role)
  double total = 0.0;
};

/// Minimum-cost perfect matching (Hungarian / Kuhn-Munkres). Among optimal
/// matchings the lexicographically smallest role_of vector is returned.
Assignment solve_assignment(const Eigen::MatrixXd& cost);

/// Reorders defender slots so the player with role r moves to defender slot
/// r. Offense and ball are untouched; the permutation is recorded.
PlaySequence reindex(const PlaySequence& seq, const std::vector<int>& role_of);
/// Inverse of reindex given the same permutation.
PlaySequence undo_reindex(const PlaySequence& seq, const std::vector<int>& role_of);

enum class AssignmentMode { kPerSequence, kPerTimestep };

struct RoleAssignmentOptions {
  AssignmentMode mode = AssignmentMode::kPerSequence;
  FeatureOptions features;
};

/// Assigns roles for one sequence with a fitted model. In per-timestep mode
/// each frame is matched independently and role_permutation holds frame 0's.
PlaySequence assign_roles(const PlaySequence& seq, const RoleModel& model,
                          const RoleAssignmentOptions& options = {});

std::string role_model_json(const RoleModel& model);
RoleModel role_model_from_json(const std::string& text);

}  // namespace mapo
