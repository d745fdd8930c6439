#include "mapo/rollout.hpp"

#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

namespace mapo {

using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

AgentState state_of(const Matrix& m, Eigen::Index row, int slot) {
  const Eigen::Index c = static_cast<Eigen::Index>(slot) * kStateDim;
  AgentState s;
  s.position = {m(row, c), m(row, c + 1)};
  s.velocity = {m(row, c + 2), m(row, c + 3)};
  s.acceleration = {m(row, c + 4), m(row, c + 5)};
  return s;
}

Matrix normal_matrix(Eigen::Index r, Eigen::Index c, nn::Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

struct RoleState {
  PolicyModel* model;
  int role;
  std::vector<Matrix> h;
  std::vector<Matrix> hg;
};

std::vector<Var> constants(Tape& tape, const std::vector<Matrix>& ms) {
  std::vector<Var> out;
  for (const auto& m : ms) out.push_back(tape.constant(m));
  return out;
}

std::vector<Matrix> values(const std::vector<Var>& vs) {
  std::vector<Matrix> out;
  for (const auto& v : vs) out.push_back(v.value());
  return out;
}

}  // namespace

std::vector<std::vector<AgentState>> ground_truth_states(const PreparedWindow& w,
                                                         std::span<const int> roles,
                                                         int frames) {
  std::vector<std::vector<AgentState>> out(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t)
    for (int r : roles) out[t].push_back(state_of(w.state, t, r));
  return out;
}

std::vector<RolloutResult> rollout(std::span<PolicyModel* const> models,
                                   std::span<const PreparedWindow> windows,
                                   const RolloutOptions& options, nn::Rng& rng) {
  if (options.burn_in < 1 || options.horizon < 1 || options.samples < 1)
    throw std::invalid_argument("burn_in, horizon and samples must be positive");
  if (models.empty() || windows.empty()) throw std::invalid_argument("nothing to roll out");
  const int frames = options.burn_in + options.horizon;
  const int slots = windows.front().slots();
  const double dt = windows.front().dt;
  for (const auto& w : windows) {
    if (w.frames() < frames)
      throw std::invalid_argument("window '" + w.sequence_id + "' has " +
                                  std::to_string(w.frames()) + " frames, need " +
                                  std::to_string(frames));
    if (w.slots() != slots || std::abs(w.dt - dt) > 1e-12)
      throw std::invalid_argument("windows differ in layout or sample rate");
  }
  std::set<int> seen;
  std::vector<RoleState> roles;
  const int n = options.samples;
  const auto batch = static_cast<Eigen::Index>(windows.size()) * n;
  for (PolicyModel* m : models) {
    if (m->config().slots != slots) throw std::invalid_argument("model slot count mismatch");
    if (!seen.insert(m->role()).second) throw std::invalid_argument("duplicate role model");
    RoleState rs{m, m->role(), m->rnn().zero_state(batch), {}};
    if (m->config().use_macro) rs.hg = m->macro().zero_state(batch);
    if (options.gate_override) options.gate_override->check_slots(slots);
    roles.push_back(std::move(rs));
  }

  std::vector<RolloutResult> results(windows.size());
  std::vector<int> role_ids;
  for (const auto& r : roles) role_ids.push_back(r.role);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    results[w].sequence_id = windows[w].sequence_id;
    results[w].roles = role_ids;
    results[w].samples.assign(
        n, std::vector<std::vector<AgentState>>(frames));
  }
  auto gt_frame = [&](int t) {
    Matrix m(batch, slots * kStateDim);
    for (Eigen::Index i = 0; i < batch; ++i) m.row(i) = windows[i / n].state.row(t);
    return m;
  };
  auto record = [&](const Matrix& state, int t) {
    for (Eigen::Index i = 0; i < batch; ++i)
      for (int r : role_ids)
        results[i / n].samples[i % n][t].push_back(state_of(state, i, r));
  };

  Matrix cur = gt_frame(0);
  record(cur, 0);
  const nn::Context ctx{nn::Mode::kEval, nullptr, false};
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  for (int t = 1; t < frames; ++t) {
    const bool gen = t >= options.burn_in;
    Matrix next = gt_frame(t);
    for (auto& rs : roles) {
      PolicyModel& model = *rs.model;
      const PolicyConfig& cfg = model.config();
      const Eigen::Index self = static_cast<Eigen::Index>(rs.role) * kStateDim;
      Tape tape(true);
      const Var s = tape.constant(model.normalize_state(cur));

      Matrix b = Matrix::Ones(batch, slots);
      if (cfg.use_gate) {
        auto [e1, e2] = model.observation().draw_noise(batch, rng);
        auto [l1, l2] = model.observation().channel_logits(tape, s);
        Matrix diff = l1.value() - l2.value();
        if (options.sample_gate) diff += e1 - e2;
        const Matrix soft =
            (1.0 / (1.0 + (-diff.array() / cfg.temperature).exp())).matrix();
        b = (diff.array() > 0.0).cast<double>().matrix();
        if (options.gate_override)
          for (Eigen::Index i = 0; i < batch; ++i)
            if (auto ov = options.gate_override->resolve(t, rs.role, soft.row(i)))
              b.row(i) = *ov;
      } else if (options.gate_override) {
        for (Eigen::Index i = 0; i < batch; ++i)
          if (auto ov = options.gate_override->resolve(t, rs.role, b.row(i)))
            b.row(i) = *ov;
      }
      if (options.log_gates)
        for (Eigen::Index i = 0; i < batch; ++i)
          results[i / n].gates.push_back(
              {static_cast<int>(i % n), t, rs.role, Eigen::RowVectorXd(b.row(i))});
      const Var o = model.observe(tape, tape.constant(b), s);

      Var g;
      if (cfg.use_macro) {
        const auto hg = constants(tape, rs.hg);
        const Matrix logp = ad::log_softmax(model.macro().logits(tape, hg, o, ctx)).value();
        std::vector<int> goal(static_cast<std::size_t>(batch));
        for (Eigen::Index i = 0; i < batch; ++i) {
          const double u = unif(rng);
          if (!gen) {
            goal[i] = windows[i / n].goals[rs.role][t];
          } else if (options.sample_macro) {
            double acc = 0.0;
            Eigen::Index c = 0;
            for (; c + 1 < logp.cols(); ++c) {
              acc += std::exp(logp(i, c));
              if (u < acc) break;
            }
            goal[i] = static_cast<int>(c);
          } else {
            Eigen::Index c;
            logp.row(i).maxCoeff(&c);
            goal[i] = static_cast<int>(c);
          }
          results[i / n].goals.push_back({static_cast<int>(i % n), t, rs.role, goal[i]});
        }
        g = tape.constant(one_hot(goal, cfg.grid.cells()));
        rs.hg = values(model.macro().update(tape, g, o, hg));
      }

      const auto h = constants(tape, rs.h);
      const Matrix truth = next.middleCols(self + 2, kActionDim);
      Var z;
      if (cfg.use_latent) {
        const Matrix eps = normal_matrix(batch, cfg.latent, rng);
        const auto dist =
            gen ? model.prior_step(tape, h.back(), o, g, ctx)
                : model.posterior_step(tape, tape.constant(model.normalize_action(truth)),
                                       h.back(), o, g, ctx);
        Matrix zv = dist.mean.value();
        if (options.sample_latent) zv += dist.std.value().cwiseProduct(eps);
        z = tape.constant(zv);
      }
      const Matrix eps_a = normal_matrix(batch, kActionDim, rng);
      Matrix a = truth;
      if (gen) {
        const auto dec = model.decode_action(tape, z, h.back(), o, g, ctx);
        a = dec.mean.value();
        if (options.sample_action) a += dec.std.value().cwiseProduct(eps_a);
        const Matrix pos = cur.middleCols(self, 2) + a.leftCols(2) * dt;
        next.middleCols(self, 2) = pos;
        next.middleCols(self + 2, kActionDim) = a;
      }
      rs.h = values(model.recurrence(tape, tape.constant(model.normalize_action(a)), z, h));
    }
    cur = std::move(next);
    record(cur, t);
  }
  return results;
}

}  // namespace mapo
