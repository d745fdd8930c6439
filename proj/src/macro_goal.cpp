#include "mapo/macro_goal.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

namespace mapo {

void GridSpec::validate() const {
  if (rows < 1 || cols < 1 || !(cell_w > 0.0) || !(cell_h > 0.0))
    throw std::invalid_argument("grid needs positive rows, cols and cell size");
}

GridSpec default_grid(Sport sport) {
  GridSpec g;
  if (sport == Sport::kBasketball) {
    g.rows = 10;
    g.cols = 9;
    g.cell_w = g.cell_h = 5.0 * kFeetToMeters;
  } else {
    const CourtBounds c = full_court(sport);
    g.rows = 22;
    g.cols = 34;
    g.cell_w = c.width() / g.cols;
    g.cell_h = c.height() / g.rows;
  }
  return g;
}

int grid_cell(const Vec2& p, const GridSpec& grid) {
  const int c = std::clamp(static_cast<int>(std::floor((p.x() - grid.x0) / grid.cell_w)),
                           0, grid.cols - 1);
  const int r = std::clamp(static_cast<int>(std::floor((p.y() - grid.y0) / grid.cell_h)),
                           0, grid.rows - 1);
  return r * grid.cols + c;
}

Vec2 cell_center(int index, const GridSpec& grid) {
  if (index < 0 || index >= grid.cells()) throw std::out_of_range("cell index");
  const int r = index / grid.cols, c = index % grid.cols;
  return {grid.x0 + (c + 0.5) * grid.cell_w, grid.y0 + (r + 0.5) * grid.cell_h};
}

std::vector<int> label_track(std::span<const Vec2> positions,
                             std::span<const Vec2> velocities, double dt,
                             const GridSpec& grid, const LabelOptions& options) {
  const std::size_t n = positions.size();
  if (velocities.size() != n) throw std::invalid_argument("track lengths differ");
  struct Stop {
    std::size_t end;
    int cell;
  };
  std::vector<Stop> stops;
  std::size_t t = 0;
  while (t < n) {
    if (velocities[t].norm() >= options.speed_threshold) {
      ++t;
      continue;
    }
    std::size_t e = t;
    Vec2 sum = Vec2::Zero();
    while (e < n && velocities[e].norm() < options.speed_threshold) sum += positions[e++];
    const std::size_t len = e - t;
    if (static_cast<double>(len) * dt >= options.min_hold - 1e-9)
      stops.push_back({e - 1, grid_cell(sum / static_cast<double>(len), grid)});
    t = e;
  }
  std::vector<int> labels(n);
  const int tail = n > 0 ? grid_cell(positions[n - 1], grid) : 0;
  std::size_t s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (s < stops.size() && stops[s].end < i) ++s;
    labels[i] = s < stops.size() ? stops[s].cell : tail;
  }
  return labels;
}

std::vector<std::vector<int>> label_macro_goals(const PlaySequence& seq,
                                                const GridSpec& grid,
                                                const LabelOptions& options) {
  grid.validate();
  std::vector<std::vector<int>> out;
  std::vector<Vec2> pos(seq.num_frames()), vel(seq.num_frames());
  for (int a : seq.indices_of(AgentRole::kDefense)) {
    for (std::size_t t = 0; t < seq.num_frames(); ++t) {
      pos[t] = seq.frames[t][a].position;
      vel[t] = seq.frames[t][a].velocity;
    }
    out.push_back(label_track(pos, vel, seq.dt(), grid, options));
  }
  return out;
}

void write_macro_labels(std::ostream& out, const std::string& sequence_id,
                        const std::vector<std::vector<int>>& labels) {
  for (std::size_t r = 0; r < labels.size(); ++r)
    for (std::size_t t = 0; t < labels[r].size(); ++t)
      out << sequence_id << ',' << t << ',' << r << ',' << labels[r][t] << '\n';
}

MacroGoalNet::MacroGoalNet(std::string name, const MacroGoalConfig& config,
                           nn::Rng& rng)
    : config_(config),
      head_(name + ".head", config.gru_hidden + config.obs_dim, config.hidden,
            config.cells, config.batch_norm, config.dropout, rng),
      gru_(name + ".gru", config.cells + config.obs_dim, config.gru_hidden,
           config.gru_layers, rng) {
  if (config.cells < 1) throw std::invalid_argument("macro-goal grid is empty");
}

ad::Var MacroGoalNet::logits(ad::Tape& tape, const std::vector<ad::Var>& h,
                             const ad::Var& o_prev, const nn::Context& ctx) {
  return head_.forward(tape, ad::concat_cols({h.back(), o_prev}), ctx);
}

std::vector<ad::Var> MacroGoalNet::update(ad::Tape& tape, const ad::Var& goal_onehot,
                                          const ad::Var& o_prev,
                                          const std::vector<ad::Var>& h) {
  return gru_.forward(tape, ad::concat_cols({goal_onehot, o_prev}), h);
}

void MacroGoalNet::collect(std::vector<ad::Parameter*>& out) {
  head_.collect(out);
  gru_.collect(out);
}

void MacroGoalNet::collect_buffers(std::vector<nn::Buffer>& out) {
  head_.collect_buffers(out);
}

ad::Matrix one_hot(std::span<const int> labels, int classes) {
  ad::Matrix m = ad::Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw std::out_of_range("label");
    m(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return m;
}

MacroStep macro_step(MacroGoalNet& net, const std::vector<ad::Matrix>& h,
                     const ad::Matrix& o_prev, nn::Rng* rng) {
  ad::Tape tape(true);
  std::vector<ad::Var> hv;
  for (const auto& m : h) hv.push_back(tape.constant(m));
  const ad::Var o = tape.constant(o_prev);
  const nn::Context ctx{nn::Mode::kEval, nullptr, false};
  const ad::Matrix logp = ad::log_softmax(net.logits(tape, hv, o, ctx)).value();
  MacroStep step;
  step.probs = logp.array().exp().matrix();
  step.goal.resize(static_cast<std::size_t>(logp.rows()));
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    if (rng == nullptr) {
      Eigen::Index best;
      logp.row(i).maxCoeff(&best);
      step.goal[i] = static_cast<int>(best);
    } else {
      const Eigen::RowVectorXd row = step.probs.row(i);
      std::discrete_distribution<int> d(row.data(), row.data() + row.size());
      step.goal[i] = d(*rng);
    }
  }
  const ad::Var g = tape.constant(one_hot(step.goal, net.config().cells));
  for (const auto& v : net.update(tape, g, o, hv)) step.h.push_back(v.value());
  return step;
}

}  // namespace mapo
