// Shared fixtures for the unit tests.
#pragma once

#include "mapo/nn.hpp"
#include "mapo/policy.hpp"
#include "mapo/synthetic.hpp"
#include "mapo/trajectory.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace mapo::test {

/// Builds a sequence from positions[t][agent]; kinematics are derived.
inline PlaySequence make_sequence(const std::string& id,
                                  const std::vector<std::vector<Vec2>>& positions,
                                  const std::vector<AgentRole>& roles, double fps = 10.0) {
  PlaySequence seq;
  seq.sequence_id = id;
  seq.sample_rate = fps;
  for (std::size_t a = 0; a < roles.size(); ++a)
    seq.agents.push_back({id + "_a" + std::to_string(a), roles[a]});
  for (const auto& row : positions) {
    std::vector<AgentState> f(row.size());
    for (std::size_t a = 0; a < row.size(); ++a) f[a].position = row[a];
    seq.frames.push_back(std::move(f));
  }
  rederive_kinematics(seq);
  return seq;
}

/// One defender, one attacker and a ball, every agent moving at a constant
/// velocity of its own.
inline PlaySequence constant_velocity_play(const std::string& id, int frames,
                                           double fps = 10.0) {
  const double dt = 1.0 / fps;
  std::vector<std::vector<Vec2>> pos(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t)
    pos[static_cast<std::size_t>(t)] = {Vec2(2.0 + 1.5 * t * dt, 3.0 - 0.5 * t * dt),
                                        Vec2(8.0 - 1.0 * t * dt, 6.0),
                                        Vec2(5.0, 5.0 + 0.25 * t * dt)};
  return make_sequence(id, pos, {AgentRole::kDefense, AgentRole::kOffense, AgentRole::kBall},
                       fps);
}

/// Small grid over the synthetic half court used to keep macro heads tiny.
inline GridSpec coarse_grid() {
  GridSpec g;
  g.rows = 2;
  g.cols = 2;
  g.cell_w = 7.0;
  g.cell_h = 7.0;
  return g;
}

/// A policy small enough for finite-difference checks.
inline PolicyConfig tiny_policy(int slots, bool latent, bool gate, bool macro) {
  PolicyConfig pc;
  pc.slots = slots;
  pc.embed_dim = 1;
  pc.hidden = 2;
  pc.latent = 1;
  pc.gru_hidden = 1;
  pc.gru_layers = 1;
  pc.dropout = 0.0;
  pc.use_latent = latent;
  pc.use_gate = gate;
  pc.use_macro = macro;
  pc.grid = coarse_grid();
  return pc;
}

/// Synthetic plays with one defender and one attacker, prepared as windows.
inline std::vector<PreparedWindow> tiny_windows(int count, int frames, std::uint64_t seed) {
  ScenarioSpec spec;
  spec.seed = seed;
  spec.n_defenders = 1;
  spec.n_attackers = 1;
  spec.num_frames = frames;
  const auto ds = generate_dataset(spec, {count, 0, 0});
  std::vector<PreparedWindow> out;
  for (const auto& s : ds.dataset.train) out.push_back(prepare_window(s, coarse_grid(), {}));
  return out;
}

/// Relative L2 error between analytic gradients of `loss` and central
/// differences over every entry of `params`. `loss` must rebuild the graph
/// on the given tape and return a 1x1 value.
inline double gradient_error(const std::vector<ad::Parameter*>& params,
                             const std::function<ad::Var(ad::Tape&)>& loss,
                             double h = 1e-6) {
  nn::zero_grad(params);
  {
    ad::Tape tape;
    tape.backward(loss(tape));
  }
  auto value = [&] {
    ad::Tape tape;
    return loss(tape).scalar();
  };
  double num = 0.0, den = 0.0;
  for (auto* p : params)
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double orig = p->value(i);
      p->value(i) = orig + h;
      const double fp = value();
      p->value(i) = orig - h;
      const double fm = value();
      p->value(i) = orig;
      const double fd = (fp - fm) / (2.0 * h);
      num += (fd - p->grad(i)) * (fd - p->grad(i));
      den += fd * fd;
    }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace mapo::test
