#include "mapo/evaluation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mapo {

namespace {

const Vec2& pick(const AgentState& s, Quantity q) {
  switch (q) {
    case Quantity::kPosition: return s.position;
    case Quantity::kVelocity: return s.velocity;
    case Quantity::kAcceleration: return s.acceleration;
  }
  return s.position;
}

}  // namespace

double trajectory_l2(const Trajectory& pred, const Trajectory& truth, Quantity q,
                     int begin, int end) {
  if (begin < 0 || end <= begin || static_cast<std::size_t>(end) > truth.size() ||
      pred.size() != truth.size())
    throw std::invalid_argument("trajectory frame range mismatch");
  double s = 0.0;
  std::size_t count = 0;
  for (int t = begin; t < end; ++t) {
    if (pred[t].size() != truth[t].size())
      throw std::invalid_argument("trajectory agent count mismatch");
    for (std::size_t k = 0; k < truth[t].size(); ++k) {
      s += (pick(pred[t][k], q) - pick(truth[t][k], q)).norm();
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("no agents to evaluate");
  return s / static_cast<double>(count);
}

SequenceL2 l2_metrics(std::span<const Trajectory> samples, const Trajectory& truth,
                      int begin, int end) {
  if (samples.empty()) throw std::invalid_argument("need at least one sample");
  SequenceL2 out;
  for (int q = 0; q < 3; ++q) {
    double sum = 0.0, best = std::numeric_limits<double>::infinity();
    for (const auto& s : samples) {
      const double v = trajectory_l2(s, truth, static_cast<Quantity>(q), begin, end);
      sum += v;
      best = std::min(best, v);
    }
    out.mean[q] = sum / static_cast<double>(samples.size());
    out.best[q] = best;
  }
  return out;
}

Stat summarize(std::span<const double> values) {
  Stat s;
  s.n = static_cast<long>(values.size());
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

BoxStats box_stats(std::vector<double> values) {
  BoxStats b;
  b.n = static_cast<long>(values.size());
  if (values.empty()) return b;
  std::sort(values.begin(), values.end());
  b.q1 = quantile(values, 0.25);
  b.median = quantile(values, 0.5);
  b.q3 = quantile(values, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo = b.q1 - 1.5 * iqr, hi = b.q3 + 1.5 * iqr;
  b.whisker_low = *std::lower_bound(values.begin(), values.end(), lo);
  b.whisker_high = *(std::upper_bound(values.begin(), values.end(), hi) - 1);
  b.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(b.n);
  return b;
}

AccelStats accel_stats(std::span<const Trajectory> trajectories, int begin, int end) {
  std::vector<double> acc, jerk;
  for (const auto& tr : trajectories) {
    const int stop = std::min<int>(end, static_cast<int>(tr.size()));
    for (int t = begin; t < stop; ++t)
      for (std::size_t k = 0; k < tr[t].size(); ++k) {
        acc.push_back(tr[t][k].acceleration.norm());
        if (t - 1 >= begin)
          jerk.push_back((tr[t][k].acceleration - tr[t - 1][k].acceleration).norm());
      }
  }
  return {box_stats(std::move(acc)), box_stats(std::move(jerk))};
}

ObservationFrameStats observation_frame_stats(const ObservationFrame& f) {
  const auto k = static_cast<Eigen::Index>(f.positions.size());
  if (f.b.size() != k) throw std::invalid_argument("gate and position counts differ");
  ObservationFrameStats s;
  s.count = f.b.sum();
  std::vector<double> dist;
  int on = 0;
  double farthest = -1.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (i == f.self) continue;
    const double d = (f.positions[i] - f.positions[f.self]).norm();
    dist.push_back(d);
    if (f.b(i) > 0.5) {
      ++on;
      farthest = std::max(farthest, d);
    }
  }
  if (on > 0) {
    std::sort(dist.begin(), dist.end());
    s.farthest = farthest;
    s.nearest = dist[on - 1];
  }
  return s;
}

ObservationSummary observation_stats(std::span<const RolloutResult> results,
                                     std::span<const PreparedWindow> windows, int begin) {
  if (results.size() != windows.size())
    throw std::invalid_argument("results and windows differ in count");
  std::vector<double> counts, far, near;
  for (std::size_t w = 0; w < results.size(); ++w) {
    const auto& res = results[w];
    const auto& win = windows[w];
    const int slots = win.slots();
    for (int role : res.roles) {
      double c = 0.0, f = 0.0, nr = 0.0;
      long nc = 0, nd = 0;
      for (const auto& e : res.gates) {
        if (e.role != role || e.t < begin) continue;
        // The gate at step t reads the state of frame t-1.
        const int frame = e.t - 1;
        ObservationFrame of{e.b, std::vector<Vec2>(slots), role};
        for (int a = 0; a < slots; ++a)
          of.positions[a] = {win.state(frame, a * kStateDim), win.state(frame, a * kStateDim + 1)};
        const auto& sample = res.samples[e.sample][frame];
        for (std::size_t j = 0; j < res.roles.size(); ++j)
          of.positions[res.roles[j]] = sample[j].position;
        const auto s = observation_frame_stats(of);
        c += s.count;
        ++nc;
        if (s.farthest) {
          f += *s.farthest;
          nr += *s.nearest;
          ++nd;
        }
      }
      if (nc > 0) counts.push_back(c / static_cast<double>(nc));
      if (nd > 0) {
        far.push_back(f / static_cast<double>(nd));
        near.push_back(nr / static_cast<double>(nd));
      }
    }
  }
  return {summarize(counts), summarize(far), summarize(near)};
}

Trajectory velocity_baseline(const PreparedWindow& w, std::span<const int> roles,
                             int burn_in, int horizon) {
  if (burn_in < 2) throw std::invalid_argument("velocity baseline needs burn_in >= 2");
  const int frames = burn_in + horizon;
  if (w.frames() < frames) throw std::invalid_argument("window shorter than burn-in + horizon");
  Trajectory out = ground_truth_states(w, roles, frames);
  for (std::size_t j = 0; j < roles.size(); ++j) {
    const Vec2 v = out[burn_in - 1][j].velocity;
    for (int t = burn_in; t < frames; ++t) {
      AgentState& s = out[t][j];
      s.position = out[t - 1][j].position + v * w.dt;
      s.velocity = v;
      s.acceleration = Vec2::Zero();
    }
  }
  return out;
}

MetricReport evaluate_samples(const std::string& model,
                              std::span<const std::vector<Trajectory>> samples,
                              std::span<const Trajectory> truth, int begin, int end) {
  if (samples.size() != truth.size())
    throw std::invalid_argument("sample sets and truths differ in count");
  MetricReport r;
  r.model = model;
  r.sequences = static_cast<long>(truth.size());
  r.samples = samples.empty() ? 0 : static_cast<int>(samples.front().size());
  std::array<std::vector<double>, 3> mean, best;
  std::vector<Trajectory> all;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto m = l2_metrics(samples[i], truth[i], begin, end);
    for (int q = 0; q < 3; ++q) {
      mean[q].push_back(m.mean[q]);
      best[q].push_back(m.best[q]);
    }
    all.insert(all.end(), samples[i].begin(), samples[i].end());
  }
  for (int q = 0; q < 3; ++q) {
    r.mean_l2[q] = summarize(mean[q]);
    r.best_l2[q] = summarize(best[q]);
  }
  r.accel = accel_stats(all, begin, end);
  return r;
}

namespace {

nlohmann::ordered_json stat_json(const Stat& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"n", s.n}};
}

nlohmann::ordered_json box_json(const BoxStats& b) {
  return {{"q1", b.q1},
          {"median", b.median},
          {"q3", b.q3},
          {"whisker_low", b.whisker_low},
          {"whisker_high", b.whisker_high},
          {"mean", b.mean},
          {"n", b.n}};
}

}  // namespace

nlohmann::ordered_json MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["sequences"] = sequences;
  j["samples"] = samples;
  for (int q = 0; q < 3; ++q) {
    j["mean_l2"][kQuantityNames[q]] = stat_json(mean_l2[q]);
    j["best_l2"][kQuantityNames[q]] = stat_json(best_l2[q]);
  }
  j["acc_norm"] = box_json(accel.acc_norm);
  j["jerk_norm"] = box_json(accel.jerk_norm);
  if (observation) {
    j["observation"] = {{"gate_count", stat_json(observation->count)},
                        {"farthest_observed", stat_json(observation->farthest)},
                        {"nearest_k", stat_json(observation->nearest)}};
  }
  return j;
}

std::string report_table(std::span<const MetricReport> reports) {
  std::string out = fmt::format("{:<22}|{:^48}|{:^48}\n", "", "Average L2", "Best L2");
  out += fmt::format("{:<22}|{:^16}{:^16}{:^16}|{:^16}{:^16}{:^16}\n", "model", "position",
                     "velocity", "acceleration", "position", "velocity", "acceleration");
  out += std::string(22 + 1 + 48 + 1 + 48, '-') + "\n";
  for (const auto& r : reports) {
    out += fmt::format("{:<22}|", r.model);
    for (const auto& s : r.mean_l2) out += fmt::format("{:^16}", fmt::format("{:.2f} ± {:.2f}", s.mean, s.sd));
    out += "|";
    for (const auto& s : r.best_l2) out += fmt::format("{:^16}", fmt::format("{:.2f} ± {:.2f}", s.mean, s.sd));
    out += "\n";
  }
  return out;
}

std::string MetricReport::table() const {
  return report_table(std::span<const MetricReport>(this, 1));
}

}  // namespace mapo
