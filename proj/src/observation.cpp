#include "mapo/observation.hpp"

#include "mapo/errors.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mapo {

using ad::Matrix;
using ad::Tape;
using ad::Var;

double gumbel_noise(std::mt19937_64& rng) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  const double u = std::clamp(dist(rng), eps, 1.0 - eps);
  return -std::log(-std::log(u));
}

Eigen::VectorXd gumbel_softmax(const Eigen::VectorXd& logits,
                               const Eigen::VectorXd& eps, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (eps.size() != logits.size()) throw std::invalid_argument("noise size mismatch");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  Eigen::ArrayXd y = (logits.array() - lse + eps.array()) / tau;
  y -= y.maxCoeff();
  y = y.exp();
  return (y / y.sum()).matrix();
}

Eigen::VectorXd gumbel_softmax_sample(const Eigen::VectorXd& logits, double tau,
                                      std::mt19937_64& rng) {
  Eigen::VectorXd eps(logits.size());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = gumbel_noise(rng);
  return gumbel_softmax(logits, eps, tau);
}

void ObservationConfig::validate() const {
  if (slots < 1 || state_dim < 1 || embed_dim < 1)
    throw std::invalid_argument("observation dimensions must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
}

ObservationNet::ObservationNet(std::string name, const ObservationConfig& config,
                               nn::Rng& rng)
    : config_(config) {
  config.validate();
  const Eigen::Index k = config.slots, ds = config.state_dim, de = config.embed_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(ds));
  std::uniform_real_distribution<double> u(-bound, bound);
  auto init = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) m(i, j) = u(rng);
    return m;
  };
  w_emb_ = ad::Parameter(name + ".embed.weight", init(ds, k * de));
  b_emb_ = ad::Parameter(name + ".embed.bias", init(1, k * de));
  w_dual1_ = ad::Parameter(name + ".dual1.weight", init(ds, k));
  w_dual2_ = ad::Parameter(name + ".dual2.weight", init(ds, k));
  b_dual1_ = ad::Parameter(name + ".dual1.bias", Matrix::Zero(1, k));
  b_dual2_ = ad::Parameter(name + ".dual2.bias", Matrix::Zero(1, k));
}

std::pair<Var, Var> ObservationNet::channel_logits(Tape& tape, const Var& state) {
  const Eigen::Index k = config_.slots;
  Var l1 = ad::add(ad::slot_linear(state, tape.parameter(w_dual1_), k),
                   tape.parameter(b_dual1_));
  Var l2 = ad::add(ad::slot_linear(state, tape.parameter(w_dual2_), k),
                   tape.parameter(b_dual2_));
  return {l1, l2};
}

Var ObservationNet::embed(Tape& tape, const Var& state) {
  return ad::add(ad::slot_linear(state, tape.parameter(w_emb_), config_.slots),
                 tape.parameter(b_emb_));
}

Var ObservationNet::gate(Tape& tape, const Var& state, GateMode mode,
                         const Matrix& eps1, const Matrix& eps2) {
  auto [l1, l2] = channel_logits(tape, state);
  // Two-way softmax over channels reduces to a sigmoid of the difference.
  const Var diff = ad::add(ad::sub(l1, l2), tape.constant(eps1 - eps2));
  const Var soft = ad::sigmoid(ad::scale(diff, 1.0 / config_.temperature));
  if (mode == GateMode::kRelaxed) return soft;
  const Matrix hard = (diff.value().array() > 0.0).cast<double>().matrix();
  return ad::straight_through(hard, soft);
}

Var ObservationNet::observe(Tape& tape, const Var& b, const Var& state) {
  return ad::block_gate(b, embed(tape, state), config_.embed_dim);
}

std::pair<Matrix, Matrix> ObservationNet::draw_noise(Eigen::Index batch,
                                                     std::mt19937_64& rng) const {
  Matrix e1(batch, config_.slots), e2(batch, config_.slots);
  for (Eigen::Index i = 0; i < batch; ++i)
    for (Eigen::Index k = 0; k < config_.slots; ++k) {
      e1(i, k) = gumbel_noise(rng);
      e2(i, k) = gumbel_noise(rng);
    }
  return {e1, e2};
}

GateSample ObservationNet::sample(const Matrix& state, std::mt19937_64& rng) {
  Tape tape(true);
  const Var s = tape.constant(state);
  auto [e1, e2] = draw_noise(state.rows(), rng);
  auto [l1, l2] = channel_logits(tape, s);
  const Matrix diff = l1.value() - l2.value() + e1 - e2;
  GateSample g;
  g.soft = (1.0 / (1.0 + (-diff.array() / config_.temperature).exp())).matrix();
  g.hard = (diff.array() > 0.0).cast<double>().matrix();
  return g;
}

void ObservationNet::collect(std::vector<ad::Parameter*>& out) {
  out.push_back(&w_emb_);
  out.push_back(&b_emb_);
  out.push_back(&w_dual1_);
  out.push_back(&w_dual2_);
  out.push_back(&b_dual1_);
  out.push_back(&b_dual2_);
}

GateOverride GateOverride::fixed(Eigen::RowVectorXd b) {
  GateOverride o;
  o.kind_ = Kind::kFixed;
  o.fixed_ = std::move(b);
  return o;
}

GateOverride GateOverride::schedule(std::vector<Eigen::MatrixXd> per_step) {
  GateOverride o;
  o.kind_ = Kind::kSchedule;
  o.schedule_ = std::move(per_step);
  return o;
}

GateOverride GateOverride::one_hot_argmax() {
  GateOverride o;
  o.kind_ = Kind::kOneHotArgmax;
  return o;
}

std::optional<Eigen::RowVectorXd> GateOverride::resolve(
    int t, int role, const Eigen::RowVectorXd& soft) const {
  switch (kind_) {
    case Kind::kFixed:
      return fixed_;
    case Kind::kSchedule: {
      if (t < 0 || static_cast<std::size_t>(t) >= schedule_.size()) return std::nullopt;
      const auto& m = schedule_[t];
      if (m.size() == 0) return std::nullopt;
      if (role >= m.rows()) throw std::invalid_argument("override schedule lacks role");
      return Eigen::RowVectorXd(m.row(role));
    }
    case Kind::kOneHotArgmax: {
      Eigen::Index best;
      soft.maxCoeff(&best);
      Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(soft.size());
      b(best) = 1.0;
      return b;
    }
  }
  return std::nullopt;
}

void GateOverride::check_slots(int k) const {
  if (kind_ == Kind::kFixed && fixed_.size() != k)
    throw std::invalid_argument("override length " + std::to_string(fixed_.size()) +
                                " does not match " + std::to_string(k) + " slots");
  if (kind_ == Kind::kSchedule)
    for (const auto& m : schedule_)
      if (m.size() != 0 && m.cols() != k)
        throw std::invalid_argument("override schedule width does not match slots");
}

GateOverride force_observation(const Eigen::RowVectorXd& b_override, int slots) {
  GateOverride o = GateOverride::fixed(b_override);
  o.check_slots(slots);
  return o;
}

void write_gate_log(std::ostream& out, const GateLog& log) {
  const Eigen::Index k = log.empty() ? 0 : log.front().b.size();
  out << "sample,t,role";
  for (Eigen::Index i = 0; i < k; ++i) out << ",b" << i;
  out << '\n';
  for (const auto& e : log) {
    out << e.sample << ',' << e.t << ',' << e.role;
    for (Eigen::Index i = 0; i < e.b.size(); ++i) out << ',' << e.b(i);
    out << '\n';
  }
}

GateLog read_gate_log(std::istream& in) {
  GateLog log;
  std::string line;
  long n = 0;
  if (!std::getline(in, line)) return log;
  ++n;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError("bad number '" + cell + "' in gate log", n);
      }
    }
    if (vals.size() < 3) throw ParseError("gate log row too short", n);
    GateLogEntry e;
    e.sample = static_cast<int>(vals[0]);
    e.t = static_cast<int>(vals[1]);
    e.role = static_cast<int>(vals[2]);
    e.b = Eigen::Map<Eigen::RowVectorXd>(vals.data() + 3,
                                         static_cast<Eigen::Index>(vals.size() - 3));
    log.push_back(std::move(e));
  }
  return log;
}

}  // namespace mapo
