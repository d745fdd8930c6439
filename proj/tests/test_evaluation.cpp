#include "helpers.hpp"

#include "mapo/evaluation.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace mapo;

namespace {

/// T frames of K agents on straight lines.
Trajectory lines(int frames, int agents, double speed) {
  Trajectory t(static_cast<std::size_t>(frames));
  for (int f = 0; f < frames; ++f)
    for (int k = 0; k < agents; ++k) {
      AgentState s;
      s.position = Vec2(k + speed * f * 0.1, 2.0 * k - speed * f * 0.05);
      s.velocity = Vec2(speed, -0.5 * speed);
      t[f].push_back(s);
    }
  return t;
}

Trajectory shifted(Trajectory t, Vec2 dp, Vec2 dv = Vec2::Zero(), Vec2 da = Vec2::Zero()) {
  for (auto& row : t)
    for (auto& s : row) {
      s.position += dp;
      s.velocity += dv;
      s.acceleration += da;
    }
  return t;
}

}  // namespace

TEST_CASE("identical prediction gives zero error") {
  const auto truth = lines(10, 3, 1.0);
  const std::vector<Trajectory> samples{truth, truth};
  const auto m = l2_metrics(samples, truth, 2, 10);
  for (int q = 0; q < 3; ++q) {
    CHECK(m.mean[q] == 0.0);
    CHECK(m.best[q] == 0.0);
  }
  const std::vector<std::vector<Trajectory>> sets{samples};
  const std::vector<Trajectory> truths{truth};
  const auto r = evaluate_samples("same", sets, truths, 2, 10);
  for (int q = 0; q < 3; ++q) {
    CHECK(r.mean_l2[q].mean == 0.0);
    CHECK(r.best_l2[q].mean == 0.0);
  }
}

TEST_CASE("uniform offset d gives L2 exactly d") {
  const auto truth = lines(12, 4, 2.0);
  for (double d : {0.5, 1.0, 3.7}) {
    const Vec2 dir = Vec2(3.0, -4.0) / 5.0;
    const auto pred = shifted(truth, d * dir, 0.5 * d * dir, 2.0 * d * dir);
    CHECK(std::abs(trajectory_l2(pred, truth, Quantity::kPosition, 0, 12) - d) < 1e-9);
    CHECK(std::abs(trajectory_l2(pred, truth, Quantity::kVelocity, 0, 12) - 0.5 * d) < 1e-9);
    CHECK(std::abs(trajectory_l2(pred, truth, Quantity::kAcceleration, 0, 12) - 2.0 * d) < 1e-9);
  }
}

TEST_CASE("best and mean over three samples match a hand computation") {
  const auto truth = lines(5, 1, 1.0);
  const std::vector<Trajectory> samples{shifted(truth, Vec2(1.0, 0.0)),
                                        shifted(truth, Vec2(0.0, 2.0)),
                                        shifted(truth, Vec2(3.0, 4.0))};
  const auto m = l2_metrics(samples, truth, 1, 5);
  CHECK(m.mean[0] == doctest::Approx((1.0 + 2.0 + 5.0) / 3.0).epsilon(1e-12));
  CHECK(m.best[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("L2 averages norms, not squared errors") {
  auto truth = lines(2, 2, 0.0);
  auto pred = truth;
  pred[1][0].position += Vec2(3.0, 4.0);  // 5 at one of the 2x2 entries
  CHECK(trajectory_l2(pred, truth, Quantity::kPosition, 0, 2) == doctest::Approx(1.25));
  CHECK(trajectory_l2(pred, truth, Quantity::kPosition, 1, 2) == doctest::Approx(2.5));
  CHECK_THROWS(trajectory_l2(pred, truth, Quantity::kPosition, 1, 1));
  CHECK_THROWS(trajectory_l2(pred, truth, Quantity::kPosition, 0, 3));
}

TEST_CASE("best never exceeds mean on random sample sets") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto truth = lines(20, 3, 1.5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Trajectory> samples;
    for (int s = 0; s < 10; ++s) {
      auto p = truth;
      for (auto& row : p)
        for (auto& a : row) a.position += Vec2(n(rng), n(rng));
      samples.push_back(std::move(p));
    }
    const auto m = l2_metrics(samples, truth, 5, 20);
    for (int q = 0; q < 3; ++q) CHECK(m.best[q] <= m.mean[q]);
  }
}

TEST_CASE("L2 is invariant to translating prediction and truth together") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  const auto truth = lines(8, 2, 1.0);
  auto pred = truth;
  for (auto& row : pred)
    for (auto& a : row) a.position += Vec2(n(rng), n(rng));
  const Vec2 c(12.5, -3.25);
  CHECK(trajectory_l2(shifted(pred, c), shifted(truth, c), Quantity::kPosition, 0, 8) ==
        doctest::Approx(trajectory_l2(pred, truth, Quantity::kPosition, 0, 8)).epsilon(1e-12));
}

TEST_CASE("summary statistics use the sample standard deviation") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto s = summarize(v);
  CHECK(s.mean == 2.5);
  CHECK(s.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(s.n == 4);
  const std::vector<double> one{7.0};
  CHECK(summarize(one).sd == 0.0);
}

TEST_CASE("quantiles interpolate between order statistics") {
  const std::vector<double> v{4.0, 1.0, 3.0, 2.0, 10.0};
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 10.0);
  CHECK(quantile(v, 0.5) == 3.0);
  CHECK(quantile(v, 0.25) == 2.0);
  CHECK(quantile({1.0, 2.0}, 0.5) == 1.5);
  const auto b = box_stats(v);
  CHECK(b.q1 == 2.0);
  CHECK(b.median == 3.0);
  CHECK(b.q3 == 4.0);
  CHECK(b.whisker_low == 1.0);
  CHECK(b.whisker_high == 4.0);  // 10 is beyond q3 + 1.5 IQR = 7
  CHECK(b.mean == 4.0);
  CHECK_THROWS(quantile({}, 0.5));
}

TEST_CASE("quartiles are ordered on random data") {
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> e(1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(1 + trial);
    for (auto& x : v) x = e(rng);
    const auto b = box_stats(v);
    CHECK(b.whisker_low <= b.q1);
    CHECK(b.q1 <= b.median);
    CHECK(b.median <= b.q3);
    CHECK(b.q3 <= b.whisker_high);
  }
}

TEST_CASE("constant velocity has zero acceleration and zero change") {
  const std::vector<Trajectory> ts{lines(15, 2, 1.0)};
  const auto s = accel_stats(ts, 3, 15);
  CHECK(s.acc_norm.median == 0.0);
  CHECK(s.jerk_norm.median == 0.0);
  CHECK(s.acc_norm.n == 12 * 2);
  CHECK(s.jerk_norm.n == 11 * 2);
}

TEST_CASE("acceleration change of a sinusoid") {
  // a(t) = (A sin(w t), 0): |a_t - a_{t-1}| = 2 A |sin(w dt / 2) cos(w (t - 1/2) dt)|
  const double amp = 2.0, w = 1.3, dt = 0.1;
  Trajectory t(40);
  for (int f = 0; f < 40; ++f) {
    AgentState s;
    s.acceleration = Vec2(amp * std::sin(w * f * dt), 0.0);
    t[f].push_back(s);
  }
  const std::vector<Trajectory> ts{t};
  const auto s = accel_stats(ts, 0, 40);
  std::vector<double> expect;
  for (int f = 1; f < 40; ++f)
    expect.push_back(2.0 * amp * std::abs(std::sin(w * dt / 2.0) * std::cos(w * (f - 0.5) * dt)));
  CHECK(s.jerk_norm.median == doctest::Approx(quantile(expect, 0.5)).epsilon(1e-12));
  CHECK(s.jerk_norm.q3 == doctest::Approx(quantile(expect, 0.75)).epsilon(1e-12));
  CHECK(s.jerk_norm.n == 39);
}

TEST_CASE("observation frame statistics") {
  ObservationFrame f;
  f.self = 0;
  for (int i = 0; i < 11; ++i) f.positions.push_back(Vec2(i, 0.0));
  f.b = Eigen::RowVectorXd::Ones(11);
  auto s = observation_frame_stats(f);
  CHECK(s.count == 11.0);
  CHECK(*s.farthest == 10.0);
  CHECK(*s.nearest == 10.0);

  f.b.setZero();
  f.b(4) = 1.0;
  s = observation_frame_stats(f);
  CHECK(s.count == 1.0);
  CHECK(*s.farthest == 4.0);
  CHECK(*s.nearest == 1.0);

  f.b.setZero();
  f.b(0) = 1.0;  // self only
  s = observation_frame_stats(f);
  CHECK(s.count == 1.0);
  CHECK_FALSE(s.farthest.has_value());
  CHECK_FALSE(s.nearest.has_value());
}

TEST_CASE("observation frame statistics on a hand-built four-agent scene") {
  ObservationFrame f;
  f.self = 1;
  f.positions = {Vec2(0.0, 0.0), Vec2(3.0, 4.0), Vec2(3.0, 0.0), Vec2(9.0, 12.0)};
  // distances from self: 5, 4, 10
  f.b = Eigen::RowVectorXd(4);
  f.b << 1.0, 1.0, 0.0, 1.0;
  const auto s = observation_frame_stats(f);
  CHECK(s.count == 3.0);
  CHECK(*s.farthest == doctest::Approx(10.0));
  CHECK(*s.nearest == doctest::Approx(5.0));  // 2nd nearest of {4, 5, 10}
  f.b.resize(3);
  CHECK_THROWS(observation_frame_stats(f));
}

TEST_CASE("velocity baseline is exact on constant-velocity play") {
  const auto w = prepare_window(test::constant_velocity_play("cv", 30), test::coarse_grid(), {});
  const std::vector<int> roles{0, 1, 2};
  const auto pred = velocity_baseline(w, roles, 5, 25);
  const auto truth = ground_truth_states(w, roles, 30);
  CHECK(trajectory_l2(pred, truth, Quantity::kPosition, 5, 30) < 1e-9);
  CHECK(trajectory_l2(pred, truth, Quantity::kVelocity, 5, 30) < 1e-9);
}

TEST_CASE("velocity baseline freezes a stopped agent and keeps burn-in") {
  std::vector<std::vector<Vec2>> pos;
  for (int t = 0; t < 12; ++t)
    pos.push_back({Vec2(3.0 + (t < 4 ? 0.0 : 0.2 * (t - 4) * (t - 4)), 2.0), Vec2(5.0, 5.0),
                   Vec2(6.0, 6.0)});
  const auto w = prepare_window(
      test::make_sequence("stop", pos, {AgentRole::kDefense, AgentRole::kOffense, AgentRole::kBall}),
      test::coarse_grid(), {});
  const std::vector<int> roles{0};
  const auto pred = velocity_baseline(w, roles, 3, 9);
  const auto truth = ground_truth_states(w, roles, 12);
  for (int t = 0; t < 3; ++t) CHECK(pred[t][0].position == truth[t][0].position);
  for (int t = 3; t < 12; ++t) {
    CHECK(pred[t][0].position == truth[2][0].position);
    CHECK(pred[t][0].acceleration == Vec2::Zero());
  }
  CHECK_THROWS(velocity_baseline(w, roles, 1, 5));
  CHECK_THROWS(velocity_baseline(w, roles, 3, 10));
}

TEST_CASE("report serialises every quantity") {
  const auto truth = lines(6, 1, 1.0);
  const std::vector<std::vector<Trajectory>> sets{{shifted(truth, Vec2(1.0, 0.0))}};
  const std::vector<Trajectory> truths{truth};
  const auto r = evaluate_samples("toy", sets, truths, 2, 6);
  const auto j = r.to_json();
  CHECK(j.at("model") == "toy");
  for (const char* q : kQuantityNames) CHECK(j.dump().find(q) != std::string::npos);
  CHECK(r.table().find("toy") != std::string::npos);
  const std::vector<MetricReport> reports{r, r};
  CHECK(report_table(reports).find("toy") != std::string::npos);
}
