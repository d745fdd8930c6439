#include "mapo/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace mapo {

double min_jerk_profile(double tau) {
  const double t3 = tau * tau * tau;
  return t3 * (10.0 - 15.0 * tau + 6.0 * tau * tau);
}

std::vector<Vec2> min_jerk_segment(const Vec2& x0, const Vec2& xf,
                                   double duration, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (duration < 2.0 * dt - 1e-12)
    throw std::invalid_argument("min-jerk duration must be at least 2 dt");
  const int n = std::max(2, static_cast<int>(std::lround(duration / dt)));
  std::vector<Vec2> out(static_cast<std::size_t>(n) + 1);
  const Vec2 d = xf - x0;
  out.front() = x0;
  for (int k = 1; k < n; ++k)
    out[k] = x0 + d * min_jerk_profile(static_cast<double>(k) / n);
  out.back() = xf;
  return out;
}

void ScenarioSpec::validate() const {
  if (n_defenders < 1 || n_attackers < 1)
    throw std::invalid_argument("scenario needs defenders and attackers");
  if (!(bounds.width() > 0.0) || !(bounds.height() > 0.0))
    throw std::invalid_argument("court bounds must have positive extent");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("sample rate must be positive");
  if (!(min_segment >= 2.0 / sample_rate) || max_segment < min_segment)
    throw std::invalid_argument("segment duration range invalid");
  if (noise < 0.0) throw std::invalid_argument("noise must be non-negative");
  if (num_frames < 3) throw std::invalid_argument("need at least 3 frames");
  if (!tracking.empty()) {
    if (static_cast<int>(tracking.size()) != n_defenders)
      throw std::invalid_argument("tracking map must cover every defender");
    for (int a : tracking)
      if (a < 0 || a >= n_attackers)
        throw std::invalid_argument("tracking map target out of range");
  }
}

std::vector<int> ScenarioSpec::resolved_tracking() const {
  if (!tracking.empty()) return tracking;
  std::vector<int> t(static_cast<std::size_t>(n_defenders));
  for (int d = 0; d < n_defenders; ++d) t[d] = d % n_attackers;
  return t;
}

double jerk_bound(const ScenarioSpec& spec) {
  const double diag = std::hypot(spec.bounds.width(), spec.bounds.height());
  return 60.0 * diag / std::pow(spec.min_segment, 3);
}

namespace {

using Rng = std::mt19937_64;

Vec2 random_point(const CourtBounds& b, Rng& rng) {
  std::uniform_real_distribution<double> ux(b.x_min, b.x_max);
  std::uniform_real_distribution<double> uy(b.y_min, b.y_max);
  const double x = ux(rng);
  return {x, uy(rng)};
}

int segment_steps(const ScenarioSpec& spec, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  return std::max(2, static_cast<int>(std::lround(u(rng) * spec.sample_rate)));
}

// Appends a min-jerk segment starting at track.back(); stops at `frames`.
void append_segment(std::vector<Vec2>& track, const Vec2& target, int steps,
                    double dt, std::size_t frames) {
  const auto seg = min_jerk_segment(track.back(), target, steps * dt, dt);
  for (std::size_t k = 1; k < seg.size() && track.size() < frames; ++k)
    track.push_back(seg[k]);
}

}  // namespace

Scenario generate_scenario(const ScenarioSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const double dt = 1.0 / spec.sample_rate;
  const auto frames = static_cast<std::size_t>(spec.num_frames);
  const auto tracking = spec.resolved_tracking();

  std::vector<std::vector<Vec2>> attackers(spec.n_attackers);
  for (auto& track : attackers) {
    track.push_back(random_point(spec.bounds, rng));
    while (track.size() < frames) {
      const int steps = segment_steps(spec, spec.min_segment, spec.max_segment, rng);
      append_segment(track, random_point(spec.bounds, rng), steps, dt, frames);
    }
  }

  // The ball sits with a holder, then flies to a receiver on a min-jerk path.
  std::vector<Vec2> ball;
  std::uniform_int_distribution<int> pick(0, spec.n_attackers - 1);
  int holder = pick(rng);
  ball.push_back(attackers[holder][0]);
  while (ball.size() < frames) {
    const int hold = segment_steps(spec, 1.0, 2.5, rng);
    for (int k = 0; k < hold && ball.size() < frames; ++k)
      ball.push_back(attackers[holder][ball.size()]);
    if (ball.size() >= frames) break;
    int receiver = holder;
    if (spec.n_attackers > 1)
      while (receiver == holder) receiver = pick(rng);
    const int flight = segment_steps(spec, 0.5, 1.0, rng);
    const std::size_t catch_t =
        std::min(frames - 1, ball.size() - 1 + static_cast<std::size_t>(flight));
    append_segment(ball, attackers[receiver][catch_t], flight, dt, frames);
    holder = receiver;
  }

  std::vector<std::vector<Vec2>> defenders(spec.n_defenders);
  for (int d = 0; d < spec.n_defenders; ++d) {
    const auto& mark = attackers[tracking[d]];
    auto& track = defenders[d];
    track.push_back(0.5 * (mark[0] + ball[0]));
    while (track.size() < frames) {
      const std::size_t now = track.size() - 1;
      const int steps = segment_steps(spec, spec.min_segment, spec.max_segment, rng);
      append_segment(track, 0.5 * (mark[now] + ball[now]), steps, dt, frames);
    }
  }

  Scenario sc;
  sc.tracking = tracking;
  PlaySequence& seq = sc.sequence;
  seq.sequence_id = spec.sequence_id;
  seq.sport = spec.sport;
  seq.sample_rate = spec.sample_rate;
  for (int d = 0; d < spec.n_defenders; ++d)
    seq.agents.push_back({"D" + std::to_string(d), AgentRole::kDefense});
  for (int a = 0; a < spec.n_attackers; ++a)
    seq.agents.push_back({"A" + std::to_string(a), AgentRole::kOffense});
  seq.agents.push_back({"ball", AgentRole::kBall});

  std::normal_distribution<double> noise(0.0, 1.0);
  seq.frames.assign(frames, std::vector<AgentState>(seq.agents.size()));
  for (std::size_t t = 0; t < frames; ++t) {
    std::size_t slot = 0;
    auto place = [&](const Vec2& p) {
      Vec2 q = p;
      if (spec.noise > 0.0) {
        const double nx = noise(rng);
        q += spec.noise * Vec2(nx, noise(rng));
        q = spec.bounds.clamp(q);
      }
      seq.frames[t][slot++].position = q;
    };
    for (const auto& tr : defenders) place(tr[t]);
    for (const auto& tr : attackers) place(tr[t]);
    place(ball[t]);
  }
  rederive_kinematics(seq);

  const int k = spec.num_agents();
  sc.mask.assign(spec.n_defenders, std::vector<int>(k, 0));
  for (int d = 0; d < spec.n_defenders; ++d) {
    sc.mask[d][d] = 1;
    sc.mask[d][spec.n_defenders + tracking[d]] = 1;
    sc.mask[d][k - 1] = 1;
  }
  return sc;
}

SyntheticDataset generate_dataset(const ScenarioSpec& base,
                                  const SyntheticSplits& splits) {
  SyntheticDataset out;
  out.dataset.dt = 1.0 / base.sample_rate;
  std::uint64_t index = 0;
  for (auto [split, count] : {std::pair{Split::kTrain, splits.train},
                              std::pair{Split::kVal, splits.val},
                              std::pair{Split::kTest, splits.test}}) {
    for (int i = 0; i < count; ++i, ++index) {
      ScenarioSpec spec = base;
      std::seed_seq seq{base.seed, index};
      std::array<std::uint32_t, 2> words{};
      seq.generate(words.begin(), words.end());
      spec.seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
      spec.sequence_id = base.sequence_id + "-" + std::string(to_string(split)) +
                         "-" + std::to_string(i);
      Scenario sc = generate_scenario(spec);
      sc.sequence.split = split;
      out.dataset.split(split).push_back(sc.sequence);
      out.scenarios.push_back(std::move(sc));
    }
  }
  return out;
}

std::string mask_json(std::span<const Scenario> scenarios) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& sc : scenarios)
    arr.push_back({{"sequence_id", sc.sequence.sequence_id},
                   {"tracking", sc.tracking},
                   {"mask", sc.mask}});
  return arr.dump(1);
}

void write_mask_json(const std::string& path, std::span<const Scenario> scenarios) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << mask_json(scenarios) << '\n';
}

std::vector<MaskRecord> read_mask_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  const auto j = nlohmann::json::parse(in);
  std::vector<MaskRecord> out;
  for (const auto& r : j)
    out.push_back({r.at("sequence_id").get<std::string>(),
                   r.at("tracking").get<std::vector<int>>(),
                   r.at("mask").get<ObservationMask>()});
  return out;
}

}  // namespace mapo
