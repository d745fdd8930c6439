// Multi-agent tracking data model, JSON-Lines ingestion and export,
// finite-difference kinematics, attack-direction normalisation and windowing.
#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mapo {

using Vec2 = Eigen::Vector2d;

enum class Sport { kBasketball, kSoccer };
enum class AgentRole { kDefense, kOffense, kBall };
enum class Split { kTrain, kVal, kTest };

Sport parse_sport(std::string_view s);
std::string_view to_string(Sport s);
AgentRole parse_role(std::string_view s);
std::string_view to_string(AgentRole r);
Split parse_split(std::string_view s);
std::string_view to_string(Split s);

/// Axis-aligned playing area in meters.
struct CourtBounds {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double mid_x() const { return 0.5 * (x_min + x_max); }
  bool contains(const Vec2& p, double tol = 0.0) const;
  Vec2 clamp(const Vec2& p) const;
};

/// Full playing surface: basketball 94x50 ft, soccer 105x68 m.
CourtBounds full_court(Sport sport);
/// Basketball left half court (the attacking half after normalisation);
/// the whole pitch for soccer.
CourtBounds attacking_half(Sport sport);

inline constexpr double kFeetToMeters = 0.3048;

struct AgentState {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  Vec2 acceleration = Vec2::Zero();

  bool operator==(const AgentState&) const = default;
};

struct AgentInfo {
  std::string id;
  AgentRole role = AgentRole::kDefense;

  bool operator==(const AgentInfo&) const = default;
};

/// One play at a fixed sample rate. Agent order is fixed across frames.
struct PlaySequence {
  std::string sequence_id;
  Sport sport = Sport::kBasketball;
  double sample_rate = 10.0;
  Split split = Split::kTrain;
  std::vector<AgentInfo> agents;
  std::vector<std::vector<AgentState>> frames;  // [t][agent]
  /// Defender slot -> role index applied by role assignment, if any.
  std::optional<std::vector<int>> role_permutation;

  std::size_t num_frames() const { return frames.size(); }
  std::size_t num_agents() const { return agents.size(); }
  double dt() const { return 1.0 / sample_rate; }
  std::vector<int> indices_of(AgentRole role) const;
  int ball_index() const;

  /// Throws SchemaError if frames are ragged, positions non-finite, or the
  /// ball slot count differs from one.
  void validate() const;

  bool operator==(const PlaySequence&) const = default;
};

struct Dataset {
  std::vector<PlaySequence> train;
  std::vector<PlaySequence> val;
  std::vector<PlaySequence> test;
  double dt = 0.1;

  std::size_t size() const { return train.size() + val.size() + test.size(); }
  std::vector<PlaySequence>& split(Split s);
  const std::vector<PlaySequence>& split(Split s) const;
  /// All sequences in train, val, test order.
  std::vector<const PlaySequence*> all() const;
};

struct IngestOptions {
  /// Treat gaps (null or non-finite positions) as errors instead of dropping.
  bool strict = false;
  /// Mirror plays so the offense attacks toward decreasing x.
  bool normalize_direction = false;
};

struct IngestResult {
  Dataset dataset;
  std::vector<std::string> warnings;
};

/// Reads the JSON-Lines tracking format. Positions are in meters; velocities
/// and accelerations are derived by backward differences.
IngestResult ingest_tracking(const std::string& path,
                             const IngestOptions& options = {});
IngestResult ingest_tracking(std::istream& in, const IngestOptions& options = {});

/// Parses one JSON-Lines record. `line` is used in error messages.
/// Returns nullopt when the record has a gap and `strict` is false.
std::optional<PlaySequence> parse_sequence(std::string_view text, long line,
                                           bool strict,
                                           std::vector<std::string>* warnings);

/// Canonical single-line serialisation (positions only).
std::string to_json_line(const PlaySequence& seq);
void write_tracking(std::ostream& out, std::span<const PlaySequence> seqs);
void write_tracking(const std::string& path, std::span<const PlaySequence> seqs);

/// CSV mirror of the tracking schema: sequence_id,t,agent_id,role,x,y.
void write_tracking_csv(std::ostream& out, std::span<const PlaySequence> seqs);

struct Kinematics {
  std::vector<Vec2> velocities;
  std::vector<Vec2> accelerations;
};

/// Backward differences v_t = (x_t - x_{t-1})/dt and a_t = (v_t - v_{t-1})/dt.
/// v_0 copies v_1; a_0 and a_1 copy a_2 so lengths match the input.
Kinematics derive_kinematics(std::span<const Vec2> positions, double dt);

/// Recomputes velocities and accelerations of every agent from positions.
void rederive_kinematics(PlaySequence& seq);

/// Mean x displacement of the offense over the play (0 with no offense).
double offense_mean_dx(const PlaySequence& seq);

/// Mirrors x about the court midline when the offense moves toward +x.
PlaySequence normalize_attack_direction(const PlaySequence& seq);

/// Non-overlapping windows of burn_in + horizon frames; tails are dropped.
Dataset split_windows(const Dataset& dataset, int burn_in, int horizon);
std::vector<PlaySequence> split_windows(const PlaySequence& seq, int burn_in,
                                        int horizon);

/// Reorders agents to defense, offense, ball (stable within each role).
PlaySequence canonical_agent_order(const PlaySequence& seq);

}  // namespace mapo
