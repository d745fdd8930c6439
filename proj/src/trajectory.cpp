#include "mapo/trajectory.hpp"

#include "mapo/errors.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mapo {

using ojson = nlohmann::ordered_json;

Sport parse_sport(std::string_view s) {
  if (s == "basketball") return Sport::kBasketball;
  if (s == "soccer") return Sport::kSoccer;
  throw ConfigError("unknown sport '" + std::string(s) + "'");
}

std::string_view to_string(Sport s) {
  return s == Sport::kBasketball ? "basketball" : "soccer";
}

AgentRole parse_role(std::string_view s) {
  if (s == "defense") return AgentRole::kDefense;
  if (s == "offense") return AgentRole::kOffense;
  if (s == "ball") return AgentRole::kBall;
  throw SchemaError("unknown agent role '" + std::string(s) + "'");
}

std::string_view to_string(AgentRole r) {
  switch (r) {
    case AgentRole::kDefense: return "defense";
    case AgentRole::kOffense: return "offense";
    case AgentRole::kBall: return "ball";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw SchemaError("unknown split '" + std::string(s) + "'");
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

bool CourtBounds::contains(const Vec2& p, double tol) const {
  return p.x() >= x_min - tol && p.x() <= x_max + tol && p.y() >= y_min - tol &&
         p.y() <= y_max + tol;
}

Vec2 CourtBounds::clamp(const Vec2& p) const {
  return {std::clamp(p.x(), x_min, x_max), std::clamp(p.y(), y_min, y_max)};
}

CourtBounds full_court(Sport sport) {
  if (sport == Sport::kBasketball)
    return {0.0, 94.0 * kFeetToMeters, 0.0, 50.0 * kFeetToMeters};
  return {0.0, 105.0, 0.0, 68.0};
}

CourtBounds attacking_half(Sport sport) {
  if (sport == Sport::kBasketball)
    return {0.0, 47.0 * kFeetToMeters, 0.0, 50.0 * kFeetToMeters};
  return full_court(sport);
}

std::vector<int> PlaySequence::indices_of(AgentRole role) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < agents.size(); ++i)
    if (agents[i].role == role) out.push_back(static_cast<int>(i));
  return out;
}

int PlaySequence::ball_index() const {
  const auto balls = indices_of(AgentRole::kBall);
  if (balls.size() != 1) throw SchemaError("sequence must have exactly one ball");
  return balls.front();
}

void PlaySequence::validate() const {
  if (sample_rate <= 0.0 || !std::isfinite(sample_rate))
    throw SchemaError(sequence_id + ": sample rate must be positive");
  if (indices_of(AgentRole::kBall).size() != 1)
    throw SchemaError(sequence_id + ": exactly one ball slot required");
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].size() != agents.size())
      throw SchemaError(sequence_id + ": frame " + std::to_string(t) + " has " +
                        std::to_string(frames[t].size()) + " agents, expected " +
                        std::to_string(agents.size()));
    for (const AgentState& s : frames[t])
      if (!s.position.allFinite() || !s.velocity.allFinite() ||
          !s.acceleration.allFinite())
        throw SchemaError(sequence_id + ": non-finite state at frame " +
                          std::to_string(t));
  }
}

std::vector<PlaySequence>& Dataset::split(Split s) {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kVal: return val;
    case Split::kTest: return test;
  }
  return train;
}

const std::vector<PlaySequence>& Dataset::split(Split s) const {
  return const_cast<Dataset*>(this)->split(s);
}

std::vector<const PlaySequence*> Dataset::all() const {
  std::vector<const PlaySequence*> out;
  for (const auto* part : {&train, &val, &test})
    for (const auto& s : *part) out.push_back(&s);
  return out;
}

Kinematics derive_kinematics(std::span<const Vec2> positions, double dt) {
  const std::size_t n = positions.size();
  if (n < 3)
    throw std::invalid_argument("derive_kinematics needs at least 3 positions");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  Kinematics k;
  k.velocities.resize(n);
  k.accelerations.resize(n);
  for (std::size_t t = 1; t < n; ++t)
    k.velocities[t] = (positions[t] - positions[t - 1]) / dt;
  k.velocities[0] = k.velocities[1];
  for (std::size_t t = 2; t < n; ++t)
    k.accelerations[t] = (k.velocities[t] - k.velocities[t - 1]) / dt;
  k.accelerations[0] = k.accelerations[2];
  k.accelerations[1] = k.accelerations[2];
  return k;
}

void rederive_kinematics(PlaySequence& seq) {
  const std::size_t n = seq.num_frames();
  std::vector<Vec2> pos(n);
  for (std::size_t a = 0; a < seq.num_agents(); ++a) {
    for (std::size_t t = 0; t < n; ++t) pos[t] = seq.frames[t][a].position;
    const Kinematics k = derive_kinematics(pos, seq.dt());
    for (std::size_t t = 0; t < n; ++t) {
      seq.frames[t][a].velocity = k.velocities[t];
      seq.frames[t][a].acceleration = k.accelerations[t];
    }
  }
}

namespace {

Vec2 read_point(const ojson& p, long line) {
  if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
    throw ParseError("position must be [x, y]", line);
  return {p[0].get<double>(), p[1].get<double>()};
}

const ojson& require(const ojson& obj, const char* key, long line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing key '") + key + "'", line);
  return *it;
}

}  // namespace

std::optional<PlaySequence> parse_sequence(std::string_view text, long line,
                                           bool strict,
                                           std::vector<std::string>* warnings) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line);
  }
  if (!j.is_object()) throw ParseError("record must be a JSON object", line);

  PlaySequence seq;
  try {
    seq.sequence_id = require(j, "sequence_id", line).get<std::string>();
    seq.sport = parse_sport(require(j, "sport", line).get<std::string>());
    seq.sample_rate = require(j, "fps", line).get<double>();
    if (auto it = j.find("split"); it != j.end())
      seq.split = parse_split(it->get<std::string>());
    for (const auto& a : require(j, "agents", line)) {
      seq.agents.push_back({require(a, "id", line).get<std::string>(),
                            parse_role(require(a, "role", line).get<std::string>())});
    }
    if (auto it = j.find("role_permutation"); it != j.end())
      seq.role_permutation = it->get<std::vector<int>>();
  } catch (const ojson::exception& e) {
    throw ParseError(std::string("bad field type: ") + e.what(), line);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), line);
  }
  if (!(seq.sample_rate > 0.0)) throw ParseError("fps must be positive", line);

  const ojson& frames = require(j, "frames", line);
  if (!frames.is_array()) throw ParseError("frames must be an array", line);
  const std::size_t k = seq.agents.size();
  bool gap = false;
  seq.frames.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const ojson& f = frames[t];
    if (f.is_null()) {
      gap = true;
      continue;
    }
    if (!f.is_array()) throw ParseError("frame must be an array", line);
    if (f.size() != k)
      throw SchemaError("line " + std::to_string(line) + ": frame " +
                        std::to_string(t) + " has " + std::to_string(f.size()) +
                        " agents, expected " + std::to_string(k));
    std::vector<AgentState> states(k);
    for (std::size_t a = 0; a < k; ++a) {
      if (f[a].is_null()) {
        gap = true;
        continue;
      }
      states[a].position = read_point(f[a], line);
      if (!states[a].position.allFinite()) gap = true;
    }
    seq.frames.push_back(std::move(states));
  }

  if (gap) {
    const std::string msg = "sequence '" + seq.sequence_id + "' has missing frames";
    if (strict) throw SchemaError("line " + std::to_string(line) + ": " + msg);
    if (warnings) warnings->push_back(msg + "; dropped");
    spdlog::warn("{}; dropped", msg);
    return std::nullopt;
  }
  if (seq.indices_of(AgentRole::kBall).size() != 1)
    throw SchemaError("line " + std::to_string(line) +
                      ": exactly one ball agent required");
  if (seq.frames.size() < 3) {
    const std::string msg =
        "sequence '" + seq.sequence_id + "' has fewer than 3 frames";
    if (strict) throw SchemaError("line " + std::to_string(line) + ": " + msg);
    if (warnings) warnings->push_back(msg + "; dropped");
    spdlog::warn("{}; dropped", msg);
    return std::nullopt;
  }
  rederive_kinematics(seq);
  return seq;
}

IngestResult ingest_tracking(std::istream& in, const IngestOptions& options) {
  IngestResult result;
  std::string line;
  long line_no = 0;
  std::vector<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto seq = parse_sequence(line, line_no, options.strict, &result.warnings);
    if (!seq) continue;
    if (std::find(ids.begin(), ids.end(), seq->sequence_id) != ids.end())
      throw SchemaError("line " + std::to_string(line_no) +
                        ": duplicate sequence_id '" + seq->sequence_id + "'");
    ids.push_back(seq->sequence_id);
    if (options.normalize_direction) *seq = normalize_attack_direction(*seq);
    result.dataset.dt = seq->dt();
    result.dataset.split(seq->split).push_back(std::move(*seq));
  }
  return result;
}

IngestResult ingest_tracking(const std::string& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tracking file '" + path + "'");
  return ingest_tracking(in, options);
}

std::string to_json_line(const PlaySequence& seq) {
  ojson j;
  j["sequence_id"] = seq.sequence_id;
  j["sport"] = std::string(to_string(seq.sport));
  if (seq.sample_rate == std::floor(seq.sample_rate))
    j["fps"] = static_cast<long long>(seq.sample_rate);
  else
    j["fps"] = seq.sample_rate;
  j["split"] = std::string(to_string(seq.split));
  ojson agents = ojson::array();
  for (const auto& a : seq.agents)
    agents.push_back({{"id", a.id}, {"role", std::string(to_string(a.role))}});
  j["agents"] = std::move(agents);
  ojson frames = ojson::array();
  for (const auto& f : seq.frames) {
    ojson row = ojson::array();
    for (const auto& s : f) row.push_back({s.position.x(), s.position.y()});
    frames.push_back(std::move(row));
  }
  j["frames"] = std::move(frames);
  if (seq.role_permutation) j["role_permutation"] = *seq.role_permutation;
  return j.dump();
}

void write_tracking(std::ostream& out, std::span<const PlaySequence> seqs) {
  for (const auto& s : seqs) out << to_json_line(s) << '\n';
}

void write_tracking(const std::string& path, std::span<const PlaySequence> seqs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_tracking(out, seqs);
}

void write_tracking_csv(std::ostream& out, std::span<const PlaySequence> seqs) {
  out << "sequence_id,t,agent_id,role,x,y\n";
  out.precision(17);
  for (const auto& s : seqs)
    for (std::size_t t = 0; t < s.frames.size(); ++t)
      for (std::size_t a = 0; a < s.agents.size(); ++a)
        out << s.sequence_id << ',' << t << ',' << s.agents[a].id << ','
            << to_string(s.agents[a].role) << ',' << s.frames[t][a].position.x()
            << ',' << s.frames[t][a].position.y() << '\n';
}

double offense_mean_dx(const PlaySequence& seq) {
  const auto offense = seq.indices_of(AgentRole::kOffense);
  if (offense.empty() || seq.frames.empty()) return 0.0;
  double dx = 0.0;
  for (int a : offense)
    dx += seq.frames.back()[a].position.x() - seq.frames.front()[a].position.x();
  return dx / static_cast<double>(offense.size());
}

PlaySequence normalize_attack_direction(const PlaySequence& seq) {
  if (offense_mean_dx(seq) <= 0.0) return seq;
  const CourtBounds court = full_court(seq.sport);
  const double axis = court.x_min + court.x_max;
  PlaySequence out = seq;
  for (auto& frame : out.frames)
    for (auto& s : frame) {
      s.position.x() = axis - s.position.x();
      s.velocity.x() = -s.velocity.x();
      s.acceleration.x() = -s.acceleration.x();
    }
  return out;
}

std::vector<PlaySequence> split_windows(const PlaySequence& seq, int burn_in,
                                        int horizon) {
  if (burn_in < 1 || horizon < 1)
    throw std::invalid_argument("burn_in and horizon must be >= 1");
  const std::size_t len = static_cast<std::size_t>(burn_in + horizon);
  std::vector<PlaySequence> out;
  for (std::size_t start = 0, w = 0; start + len <= seq.num_frames();
       start += len, ++w) {
    PlaySequence win = seq;
    win.sequence_id = seq.sequence_id + "#w" + std::to_string(w);
    win.frames.assign(seq.frames.begin() + static_cast<std::ptrdiff_t>(start),
                      seq.frames.begin() + static_cast<std::ptrdiff_t>(start + len));
    out.push_back(std::move(win));
  }
  if (out.empty())
    spdlog::warn("sequence '{}' has {} frames, shorter than a {}-frame window",
                 seq.sequence_id, seq.num_frames(), len);
  return out;
}

Dataset split_windows(const Dataset& dataset, int burn_in, int horizon) {
  if (burn_in < 1 || horizon < 1)
    throw std::invalid_argument("burn_in and horizon must be >= 1");
  Dataset out;
  out.dt = dataset.dt;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest})
    for (const auto& seq : dataset.split(s))
      for (auto& w : split_windows(seq, burn_in, horizon))
        out.split(s).push_back(std::move(w));
  return out;
}

PlaySequence canonical_agent_order(const PlaySequence& seq) {
  std::vector<int> order;
  for (AgentRole r : {AgentRole::kDefense, AgentRole::kOffense, AgentRole::kBall})
    for (int i : seq.indices_of(r)) order.push_back(i);
  PlaySequence out = seq;
  for (std::size_t i = 0; i < order.size(); ++i) out.agents[i] = seq.agents[order[i]];
  for (std::size_t t = 0; t < seq.frames.size(); ++t)
    for (std::size_t i = 0; i < order.size(); ++i)
      out.frames[t][i] = seq.frames[t][order[i]];
  return out;
}

}  // namespace mapo
