// Long-horizon sampling from a set of per-role policies: ground-truth
// burn-in, then free generation with positions integrated from predicted
// velocities. Offense, ball and roles without a model replay ground truth.
#pragma once

#include "mapo/observation.hpp"
#include "mapo/policy.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mapo {

struct RolloutOptions {
  int burn_in = 20;
  int horizon = 60;
  int samples = 10;
  bool sample_latent = true;
  bool sample_action = true;
  bool sample_gate = true;
  bool sample_macro = true;
  /// Replaces the gate at every step, burn-in included.
  std::optional<GateOverride> gate_override;
  bool log_gates = true;
};

struct GoalLogEntry {
  int sample = 0;
  int t = 0;
  int role = 0;
  int cell = 0;
};

struct RolloutResult {
  std::string sequence_id;
  std::vector<int> roles;  // defender slots driven by a model
  /// samples[n][t][j]: state of roles[j] at frame t; frames before burn_in
  /// are ground truth.
  std::vector<std::vector<std::vector<AgentState>>> samples;
  GateLog gates;
  std::vector<GoalLogEntry> goals;
};

/// Rolls out every window with `samples` draws each; the batch holds all
/// windows times samples. Windows must have at least burn_in + horizon
/// frames; extra frames are ignored.
std::vector<RolloutResult> rollout(std::span<PolicyModel* const> models,
                                   std::span<const PreparedWindow> windows,
                                   const RolloutOptions& options, nn::Rng& rng);

/// Ground-truth states of the given slots, shaped like one rollout sample.
std::vector<std::vector<AgentState>> ground_truth_states(const PreparedWindow& w,
                                                         std::span<const int> roles,
                                                         int frames);

}  // namespace mapo
