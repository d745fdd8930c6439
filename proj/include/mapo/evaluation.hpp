// Rollout metrics: mean and best-of-N L2 per kinematic quantity, box-plot
// summaries of acceleration and its change, observation-gate statistics with
// the nearest-k rule baseline, and the constant-velocity baseline.
#pragma once

#include "mapo/observation.hpp"
#include "mapo/policy.hpp"
#include "mapo/rollout.hpp"
#include "mapo/trajectory.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mapo {

/// [t][j] states of the evaluated agents.
using Trajectory = std::vector<std::vector<AgentState>>;

enum class Quantity { kPosition = 0, kVelocity = 1, kAcceleration = 2 };
inline constexpr std::array<const char*, 3> kQuantityNames = {"position", "velocity",
                                                             "acceleration"};

/// (1 / (T K)) sum_t sum_k |pred - truth| over frames [begin, end).
double trajectory_l2(const Trajectory& pred, const Trajectory& truth, Quantity q,
                     int begin, int end);

struct SequenceL2 {
  std::array<double, 3> mean{};  // over samples
  std::array<double, 3> best{};  // min over samples
};

/// Mean and best over N samples for one sequence.
SequenceL2 l2_metrics(std::span<const Trajectory> samples, const Trajectory& truth,
                      int begin, int end);

struct Stat {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single value
  long n = 0;
};
Stat summarize(std::span<const double> values);

struct BoxStats {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;   // smallest value >= q1 - 1.5 IQR
  double whisker_high = 0.0;  // largest value <= q3 + 1.5 IQR
  double mean = 0.0;
  long n = 0;
};
/// Quartiles by linear interpolation between order statistics.
BoxStats box_stats(std::vector<double> values);
double quantile(std::vector<double> values, double p);

struct AccelStats {
  BoxStats acc_norm;   // |acc_t|
  BoxStats jerk_norm;  // |acc_t - acc_{t-1}|
};
/// Over frames [begin, end) of every trajectory; the change uses t-1 >= begin.
AccelStats accel_stats(std::span<const Trajectory> trajectories, int begin, int end);

/// One defender at one step: its gate and every agent's position.
struct ObservationFrame {
  Eigen::RowVectorXd b;
  std::vector<Vec2> positions;
  int self = 0;
};

struct ObservationFrameStats {
  double count = 0.0;
  std::optional<double> farthest;  // max distance to a gated-on other agent
  std::optional<double> nearest;   // distance to the k-th nearest other agent
};
/// k is the number of gated-on agents other than self; steps with k = 0 have
/// no distances.
ObservationFrameStats observation_frame_stats(const ObservationFrame& f);

struct ObservationSummary {
  Stat count;
  Stat farthest;
  Stat nearest;
};

/// Aggregates per (sequence, role) means, then mean +- sd across them, over
/// generated steps t >= begin of every rollout sample.
ObservationSummary observation_stats(std::span<const RolloutResult> results,
                                     std::span<const PreparedWindow> windows, int begin);

/// Constant last-observed velocity after burn-in, positions integrated,
/// acceleration zero. Requires burn_in >= 2.
Trajectory velocity_baseline(const PreparedWindow& w, std::span<const int> roles,
                             int burn_in, int horizon);

struct MetricReport {
  std::string model;
  long sequences = 0;
  int samples = 0;
  std::array<Stat, 3> mean_l2{};
  std::array<Stat, 3> best_l2{};
  AccelStats accel;
  std::optional<ObservationSummary> observation;

  nlohmann::ordered_json to_json() const;
  /// Plain-text table: one row, mean and best L2 for each quantity.
  std::string table() const;
};

/// Builds a report from per-sequence sample sets and ground truth.
MetricReport evaluate_samples(const std::string& model,
                              std::span<const std::vector<Trajectory>> samples,
                              std::span<const Trajectory> truth, int begin, int end);

/// Rows of several reports in one table.
std::string report_table(std::span<const MetricReport> reports);

}  // namespace mapo
