// Synthetic multi-agent plays with minimum-jerk motion and a planted
// defender -> attacker tracking structure.
#pragma once

#include "mapo/trajectory.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mapo {

/// Rest-to-rest minimum-jerk profile s(tau) = 10 tau^3 - 15 tau^4 + 6 tau^5.
double min_jerk_profile(double tau);

/// Samples x(tau) = x0 + (xf - x0) s(tau) at tau_k = k / n, k = 0..n, where
/// n = round(duration / dt). Both endpoints are reproduced exactly.
std::vector<Vec2> min_jerk_segment(const Vec2& x0, const Vec2& xf,
                                   double duration, double dt);

struct ScenarioSpec {
  int n_defenders = 5;
  int n_attackers = 5;
  Sport sport = Sport::kBasketball;
  CourtBounds bounds = attacking_half(Sport::kBasketball);
  double min_segment = 1.0;  // seconds
  double max_segment = 2.5;  // seconds
  /// Defender d tracks attacker tracking[d]; empty means d mod n_attackers.
  std::vector<int> tracking;
  double noise = 0.0;  // meters, std of additive position noise
  std::uint64_t seed = 0;
  int num_frames = 80;
  double sample_rate = 10.0;
  std::string sequence_id = "synth";

  void validate() const;
  std::vector<int> resolved_tracking() const;
  int num_agents() const { return n_defenders + n_attackers + 1; }
};

/// Row d marks the slots defender d is built to depend on: itself, its
/// designated attacker and the ball.
using ObservationMask = std::vector<std::vector<int>>;

struct Scenario {
  PlaySequence sequence;
  ObservationMask mask;
  std::vector<int> tracking;
};

/// Agents are laid out defenders, attackers, ball.
Scenario generate_scenario(const ScenarioSpec& spec);

/// Upper bound on |d^3x/dt^3| of noiseless attacker and defender motion:
/// 60 * court diagonal / (shortest segment)^3.
double jerk_bound(const ScenarioSpec& spec);

struct SyntheticSplits {
  int train = 200;
  int val = 20;
  int test = 20;
};

struct SyntheticDataset {
  Dataset dataset;
  std::vector<Scenario> scenarios;  // aligned with dataset.all()
};

/// Independent scenarios per split; scenario i uses a seed derived from
/// (template seed, i).
SyntheticDataset generate_dataset(const ScenarioSpec& base,
                                  const SyntheticSplits& splits);

/// Sidecar file listing each sequence's tracking map and mask.
std::string mask_json(std::span<const Scenario> scenarios);
void write_mask_json(const std::string& path, std::span<const Scenario> scenarios);

struct MaskRecord {
  std::string sequence_id;
  std::vector<int> tracking;
  ObservationMask mask;
};
std::vector<MaskRecord> read_mask_json(const std::string& path);

}  // namespace mapo
