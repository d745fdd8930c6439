#include "helpers.hpp"
#include "mapo/macro_goal.hpp"

#include <doctest.h>

#include <sstream>

using namespace mapo;

namespace {

struct Track {
  std::vector<Vec2> pos;
  std::vector<Vec2> vel;
};

// Integrates piecewise-constant velocities from `start`.
Track integrate(const Vec2& start, const std::vector<std::pair<int, Vec2>>& phases, double dt) {
  Track tr;
  Vec2 p = start;
  for (const auto& [steps, v] : phases)
    for (int i = 0; i < steps; ++i) {
      p += v * dt;
      tr.pos.push_back(p);
      tr.vel.push_back(v);
    }
  return tr;
}

}  // namespace

TEST_CASE("grid indexing") {
  const GridSpec g = default_grid(Sport::kBasketball);
  CHECK(g.rows == 10);
  CHECK(g.cols == 9);
  CHECK(g.cell_w == doctest::Approx(1.524));
  CHECK(grid_cell(Vec2(0.0, 0.0), g) == 0);
  CHECK(grid_cell(Vec2(g.x0, g.y0), g) == 0);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      const int idx = r * g.cols + c;
      CHECK(grid_cell(cell_center(idx, g), g) == idx);
    }
  // One millimetre outside clamps to the boundary cell.
  CHECK(grid_cell(Vec2(-0.001, 3.0), g) == grid_cell(Vec2(0.0, 3.0), g));
  CHECK(grid_cell(Vec2(g.cols * g.cell_w + 0.001, g.rows * g.cell_h + 0.001), g) ==
        g.cells() - 1);
  const GridSpec s = default_grid(Sport::kSoccer);
  CHECK(s.cells() == 22 * 34);
  CHECK(s.cell_w * s.cols == doctest::Approx(105.0));
  CHECK(grid_cell(Vec2(104.99, 67.99), s) == s.cells() - 1);
  CHECK_THROWS(cell_center(g.cells(), g));
}

TEST_CASE("stationary agent is labelled with its own cell") {
  const GridSpec g = default_grid(Sport::kBasketball);
  const Vec2 p(4.0, 6.0);
  std::vector<Vec2> pos(20, p), vel(20, Vec2::Zero());
  for (int l : label_track(pos, vel, 0.1, g)) CHECK(l == grid_cell(p, g));
}

TEST_CASE("move then stop labels every earlier step with the stop cell") {
  const GridSpec g = default_grid(Sport::kBasketball);
  const Track tr = integrate(Vec2(1.0, 1.0), {{10, Vec2(5.0, 3.0)}, {8, Vec2::Zero()}}, 0.1);
  const auto labels = label_track(tr.pos, tr.vel, 0.1, g);
  const int stop = grid_cell(tr.pos.back(), g);
  CHECK(stop != grid_cell(tr.pos.front(), g));
  for (int l : labels) CHECK(l == stop);
}

TEST_CASE("three-phase track switches at the end of the first stop") {
  // Hand trace at dt = 0.1 s, threshold 0.5 m/s, hold 0.5 s:
  //   t 0..4   moving (+4, 0)     -> first stop's cell
  //   t 5..11  stopped at p1      -> first stop's cell (stop ends at t = 11)
  //   t 12..16 moving (0, +6)     -> second stop's cell
  //   t 17..24 stopped at p2      -> second stop's cell
  //   t 25..29 moving (-3, 0)     -> cell of the final position
  //   then a 0.3 s pause at t 30..32, too short to count, and t 33..35 moving.
  const GridSpec g = default_grid(Sport::kBasketball);
  const double dt = 0.1;
  const Track tr = integrate(Vec2(1.0, 1.0),
                             {{5, Vec2(4, 0)},
                              {7, Vec2::Zero()},
                              {5, Vec2(0, 6)},
                              {8, Vec2::Zero()},
                              {5, Vec2(-3, 0)},
                              {3, Vec2::Zero()},
                              {3, Vec2(-3, 0)}},
                             dt);
  const Vec2 p1(3.0, 1.0), p2(3.0, 4.0), end(0.6, 4.0);
  CHECK((tr.pos[8] - p1).norm() < 1e-12);
  CHECK((tr.pos[20] - p2).norm() < 1e-12);
  CHECK((tr.pos.back() - end).norm() < 1e-12);
  const int c1 = grid_cell(p1, g), c2 = grid_cell(p2, g), c3 = grid_cell(end, g);
  REQUIRE(c1 != c2);
  REQUIRE(c2 != c3);

  const auto labels = label_track(tr.pos, tr.vel, dt, g);
  REQUIRE(labels.size() == 36);
  for (std::size_t t = 0; t < labels.size(); ++t) {
    CAPTURE(t);
    const int expect = t <= 11 ? c1 : t <= 24 ? c2 : c3;
    CHECK(labels[t] == expect);
  }
}

TEST_CASE("labels translate with whole-cell shifts") {
  const GridSpec g = default_grid(Sport::kBasketball);
  const Track tr = integrate(Vec2(3.1, 3.2),
                             {{4, Vec2(2, 1)}, {6, Vec2::Zero()}, {4, Vec2(1, 2)}, {6, Vec2::Zero()}},
                             0.1);
  const auto base = label_track(tr.pos, tr.vel, 0.1, g);
  const Vec2 shift(2 * g.cell_w, 1 * g.cell_h);
  std::vector<Vec2> moved;
  for (const auto& p : tr.pos) moved.push_back(p + shift);
  const auto shifted = label_track(moved, tr.vel, 0.1, g);
  for (std::size_t t = 0; t < base.size(); ++t) CHECK(shifted[t] == base[t] + 1 * g.cols + 2);
}

TEST_CASE("defender labels and CSV export") {
  const PlaySequence seq = test::constant_velocity_play("m", 12);
  const auto labels = label_macro_goals(seq, default_grid(Sport::kBasketball));
  REQUIRE(labels.size() == 1);
  CHECK(labels[0].size() == 12);
  std::ostringstream out;
  write_macro_labels(out, "m", labels);
  CHECK(out.str().rfind("m,0,0,", 0) == 0);
}

TEST_CASE("macro head probabilities, greedy determinism and constant-label overfit") {
  MacroGoalConfig cfg;
  cfg.cells = 6;
  cfg.obs_dim = 3;
  cfg.hidden = 8;
  cfg.gru_hidden = 5;
  cfg.gru_layers = 1;
  cfg.batch_norm = false;
  cfg.dropout = 0.0;
  nn::Rng rng(12);
  MacroGoalNet net("macro", cfg, rng);
  const ad::Matrix o = ad::Matrix::Random(8, 3);
  const auto h = net.zero_state(8);

  const MacroStep a = macro_step(net, h, o, nullptr);
  const MacroStep b = macro_step(net, h, o, nullptr);
  CHECK(a.goal == b.goal);
  for (Eigen::Index i = 0; i < 8; ++i) CHECK(a.probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(a.h.size() == 1);
  CHECK(a.h[0] == b.h[0]);

  std::vector<ad::Parameter*> ps;
  net.collect(ps);
  const std::vector<int> labels(8, 4);
  const nn::Context ctx{nn::Mode::kTrain, nullptr, true};
  for (long step = 1; step <= 300; ++step) {
    ad::Tape tape;
    std::vector<ad::Var> hv;
    for (const auto& m : h) hv.push_back(tape.constant(m));
    const ad::Var loss = ad::cross_entropy(net.logits(tape, hv, tape.constant(o), ctx), labels);
    nn::zero_grad(ps);
    tape.backward(loss);
    nn::adam_step(ps, {.learning_rate = 0.01}, step);
  }
  const MacroStep fit = macro_step(net, h, o, nullptr);
  for (Eigen::Index i = 0; i < 8; ++i) CHECK(fit.probs(i, 4) > 0.99);
  for (int g : fit.goal) CHECK(g == 4);

  nn::Rng sampler(1);
  const MacroStep sampled = macro_step(net, h, o, &sampler);
  for (int g : sampled.goal) CHECK((g >= 0 && g < 6));
}
