#include "mapo/constraints.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mapo {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

void check_same_dim(const DiagGaussian& a, const DiagGaussian& b) {
  if (a.mean.size() != a.var.size() || b.mean.size() != b.var.size() ||
      a.mean.size() != b.mean.size())
    throw std::invalid_argument("Gaussian dimensions differ");
}

}  // namespace

double gaussian_kl(const DiagGaussian& p, const DiagGaussian& q) {
  check_same_dim(p, q);
  if ((p.var.array() <= 0.0).any() || (q.var.array() <= 0.0).any())
    throw std::invalid_argument("KL requires positive variances");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.mean.size(); ++i) {
    const double d = p.mean(i) - q.mean(i);
    kl += 0.5 * (std::log(q.var(i) / p.var(i)) + (p.var(i) + d * d) / q.var(i) - 1.0);
  }
  return kl;
}

double gaussian_nll(const Eigen::VectorXd& x, const DiagGaussian& g) {
  if (x.size() != g.mean.size() || g.var.size() != g.mean.size())
    throw std::invalid_argument("Gaussian dimensions differ");
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = x(i) - g.mean(i);
    s += kHalfLog2Pi + 0.5 * std::log(g.var(i)) + 0.5 * d * d / g.var(i);
  }
  return s;
}

DiagGaussian indirect_acc_distribution(const DiagGaussian& vel_t,
                                       const DiagGaussian& vel_prev, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  check_same_dim(vel_t, vel_prev);
  return {(vel_t.mean - vel_prev.mean) / dt, (vel_t.var + vel_prev.var) / (dt * dt)};
}

DiagGaussian indirect_pos_distribution(const Eigen::VectorXd& prev_pos,
                                       const DiagGaussian& vel_t, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (prev_pos.size() != vel_t.mean.size())
    throw std::invalid_argument("position and velocity dimensions differ");
  return {prev_pos + vel_t.mean * dt, vel_t.var * (dt * dt)};
}

std::string_view to_string(PenaltyTerm term) {
  switch (term) {
    case PenaltyTerm::kKlAcc: return "kl_acc";
    case PenaltyTerm::kPosNll: return "pos_nll";
    case PenaltyTerm::kJerk: return "jerk";
    case PenaltyTerm::kAccRecon: return "acc_recon";
  }
  return "?";
}

ConstraintPreset parse_preset(std::string_view s) {
  if (s == "vrnn") return ConstraintPreset::kVrnn;
  if (s == "c_pos") return ConstraintPreset::kPos;
  if (s == "c_pos_acc") return ConstraintPreset::kPosAcc;
  if (s == "c_pos_acc_jrk") return ConstraintPreset::kPosAccJrk;
  if (s == "mech") return ConstraintPreset::kMech;
  throw std::invalid_argument("unknown constraint preset '" + std::string(s) + "'");
}

std::string_view to_string(ConstraintPreset p) {
  switch (p) {
    case ConstraintPreset::kVrnn: return "vrnn";
    case ConstraintPreset::kPos: return "c_pos";
    case ConstraintPreset::kPosAcc: return "c_pos_acc";
    case ConstraintPreset::kPosAccJrk: return "c_pos_acc_jrk";
    case ConstraintPreset::kMech: return "mech";
  }
  return "?";
}

ConstraintConfig ConstraintConfig::preset(ConstraintPreset p, Sport sport) {
  ConstraintConfig c;
  if (sport == Sport::kSoccer) {
    c.lambda_acc *= 0.1;
    c.lambda_pos *= 0.1;
    c.lambda_jrk *= 0.1;
    c.lambda_rec *= 0.1;
  }
  const int level = static_cast<int>(p);
  c.use_pos = level >= static_cast<int>(ConstraintPreset::kPos);
  c.use_kl_acc = level >= static_cast<int>(ConstraintPreset::kPosAcc);
  c.use_jerk = level >= static_cast<int>(ConstraintPreset::kPosAccJrk);
  c.use_acc_recon = level >= static_cast<int>(ConstraintPreset::kMech);
  return c;
}

void ConstraintConfig::validate() const {
  if (lambda_acc < 0.0 || lambda_pos < 0.0 || lambda_jrk < 0.0 || lambda_rec < 0.0)
    throw std::invalid_argument("constraint weights must be non-negative");
}

bool ConstraintConfig::enabled(PenaltyTerm term) const {
  switch (term) {
    case PenaltyTerm::kKlAcc: return use_kl_acc;
    case PenaltyTerm::kPosNll: return use_pos;
    case PenaltyTerm::kJerk: return use_jerk;
    case PenaltyTerm::kAccRecon: return use_acc_recon;
  }
  return false;
}

double ConstraintConfig::weight(PenaltyTerm term) const {
  if (!enabled(term)) return 0.0;
  switch (term) {
    case PenaltyTerm::kKlAcc: return lambda_acc;
    case PenaltyTerm::kPosNll: return lambda_pos;
    case PenaltyTerm::kJerk: return lambda_jrk;
    case PenaltyTerm::kAccRecon: return lambda_rec;
  }
  return 0.0;
}

std::vector<PenaltyTerm> ConstraintConfig::enabled_terms() const {
  std::vector<PenaltyTerm> out;
  for (auto t : kAllPenaltyTerms)
    if (enabled(t)) out.push_back(t);
  return out;
}

double PenaltyValues::get(PenaltyTerm term) const {
  switch (term) {
    case PenaltyTerm::kKlAcc: return kl_acc;
    case PenaltyTerm::kPosNll: return pos_nll;
    case PenaltyTerm::kJerk: return jerk;
    case PenaltyTerm::kAccRecon: return acc_recon;
  }
  return 0.0;
}

PenaltyValues mechanical_penalties(std::span<const StepPrediction> pred,
                                   std::span<const Vec2> true_pos,
                                   std::span<const Vec2> true_acc, double dt,
                                   const ConstraintConfig& config) {
  config.validate();
  const std::size_t n = pred.size();
  if (n < 3) throw std::invalid_argument("penalties need a window of at least 3 steps");
  if (true_pos.size() != n || true_acc.size() != n)
    throw std::invalid_argument("prediction and ground-truth lengths differ");
  PenaltyValues v;
  const double w_acc = config.weight(PenaltyTerm::kKlAcc);
  const double w_pos = config.weight(PenaltyTerm::kPosNll);
  const double w_jrk = config.weight(PenaltyTerm::kJerk);
  const double w_rec = config.weight(PenaltyTerm::kAccRecon);
  for (std::size_t i = 0; i < n; ++i) {
    if (w_rec > 0.0) v.acc_recon += w_rec * gaussian_nll(true_acc[i], pred[i].acc);
    if (i == 0) continue;
    if (w_acc > 0.0)
      v.kl_acc += w_acc * gaussian_kl(pred[i].acc, indirect_acc_distribution(
                                                       pred[i].vel, pred[i - 1].vel, dt));
    if (w_pos > 0.0)
      v.pos_nll += w_pos * gaussian_nll(true_pos[i], indirect_pos_distribution(
                                                         true_pos[i - 1], pred[i].vel, dt));
    if (w_jrk > 0.0 && i + 1 < n)
      v.jerk += w_jrk * gaussian_nll(true_acc[i + 1], pred[i].acc);
  }
  return v;
}

namespace ad {

Var gaussian_nll(const Matrix& x, const Var& mean, const Var& std) {
  Tape& tape = *mean.tape();
  const Var z = div(sub(tape.constant(x), mean), std);
  const Var per = add(log(std), scale(square(z), 0.5));
  return add_scalar(sum(per), kHalfLog2Pi * static_cast<double>(x.size()));
}

Var gaussian_kl(const Var& mu_p, const Var& std_p, const Var& mu_q,
                const Var& var_q) {
  // 0.5 log var_q - log std_p + (std_p^2 + (mu_p - mu_q)^2) / (2 var_q) - 1/2
  const Var num = add(square(std_p), square(sub(mu_p, mu_q)));
  const Var per = add(sub(scale(log(var_q), 0.5), log(std_p)),
                      scale(div(num, var_q), 0.5));
  return add_scalar(sum(per), -0.5 * static_cast<double>(mu_p.value().size()));
}

Var kl_acc_penalty(const Var& mu_acc, const Var& std_acc, const Var& mu_vel,
                   const Var& std_vel, const Var& mu_vel_prev,
                   const Var& std_vel_prev, double dt) {
  const Var mu_q = scale(sub(mu_vel, mu_vel_prev), 1.0 / dt);
  const Var var_q = scale(add(square(std_vel), square(std_vel_prev)), 1.0 / (dt * dt));
  return gaussian_kl(mu_acc, std_acc, mu_q, var_q);
}

Var pos_nll_penalty(const Matrix& pos, const Matrix& prev_pos, const Var& mu_vel,
                    const Var& std_vel, double dt) {
  Tape& tape = *mu_vel.tape();
  const Var mean = add(tape.constant(prev_pos), scale(mu_vel, dt));
  return gaussian_nll(pos, mean, scale(std_vel, dt));
}

}  // namespace ad

}  // namespace mapo
