// Mechanical-constraint penalties for the vel-acc policy: indirect kinematic
// distributions built from consecutive decoder outputs, closed-form Gaussian
// KL, and the weighted penalty terms with their ablation presets.
#pragma once

#include "mapo/autodiff.hpp"
#include "mapo/trajectory.hpp"

#include <Eigen/Core>

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mapo {

struct DiagGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

/// KL(p || q) for diagonal Gaussians. Throws on non-positive variance or a
/// dimension mismatch.
double gaussian_kl(const DiagGaussian& p, const DiagGaussian& q);

/// -log N(x; mean, diag(var)).
double gaussian_nll(const Eigen::VectorXd& x, const DiagGaussian& g);

/// Acceleration implied by differencing two velocity predictions, treated as
/// independent: mean (mu_t - mu_{t-1}) / dt, variance (var_t + var_{t-1}) / dt^2.
DiagGaussian indirect_acc_distribution(const DiagGaussian& vel_t,
                                       const DiagGaussian& vel_prev, double dt);

/// Position implied by integrating a velocity prediction from prev_pos.
DiagGaussian indirect_pos_distribution(const Eigen::VectorXd& prev_pos,
                                       const DiagGaussian& vel_t, double dt);

enum class PenaltyTerm { kKlAcc, kPosNll, kJerk, kAccRecon };
inline constexpr std::array<PenaltyTerm, 4> kAllPenaltyTerms = {
    PenaltyTerm::kKlAcc, PenaltyTerm::kPosNll, PenaltyTerm::kJerk,
    PenaltyTerm::kAccRecon};
std::string_view to_string(PenaltyTerm term);

enum class ConstraintPreset { kVrnn, kPos, kPosAcc, kPosAccJrk, kMech };
ConstraintPreset parse_preset(std::string_view s);
std::string_view to_string(ConstraintPreset p);

struct ConstraintConfig {
  bool use_kl_acc = false;
  bool use_pos = false;
  bool use_jerk = false;
  bool use_acc_recon = false;
  double lambda_acc = 0.1;
  double lambda_pos = 0.01;
  double lambda_jrk = 0.1;
  double lambda_rec = 0.2;

  /// Basketball weights; soccer uses one tenth of each.
  static ConstraintConfig preset(ConstraintPreset p, Sport sport = Sport::kBasketball);

  void validate() const;
  bool enabled(PenaltyTerm term) const;
  /// Weight applied to the term, 0 when disabled.
  double weight(PenaltyTerm term) const;
  std::vector<PenaltyTerm> enabled_terms() const;
};

struct PenaltyValues {
  double kl_acc = 0.0;
  double pos_nll = 0.0;
  double jerk = 0.0;
  double acc_recon = 0.0;

  double total() const { return kl_acc + pos_nll + jerk + acc_recon; }
  double get(PenaltyTerm term) const;
};

/// Decoder output at one step: Gaussians over velocity and acceleration.
struct StepPrediction {
  DiagGaussian vel;
  DiagGaussian acc;
};

/// Weighted penalties over one window. Entry i of every span refers to the
/// same time step. kl_acc, pos_nll and jerk run over i = 1..L-1 (jerk only
/// while i+1 exists); acc_recon covers every step. Requires L >= 3.
PenaltyValues mechanical_penalties(std::span<const StepPrediction> pred,
                                   std::span<const Vec2> true_pos,
                                   std::span<const Vec2> true_acc, double dt,
                                   const ConstraintConfig& config);

namespace ad {

/// Sum over rows and columns of -log N(x; mean, std^2).
Var gaussian_nll(const Matrix& x, const Var& mean, const Var& std);

/// Sum of KL(N(mu_p, std_p^2) || N(mu_q, var_q)) over all entries.
Var gaussian_kl(const Var& mu_p, const Var& std_p, const Var& mu_q,
                const Var& var_q);

/// Summed KL between the direct acceleration head and the acceleration
/// implied by two consecutive velocity heads.
Var kl_acc_penalty(const Var& mu_acc, const Var& std_acc, const Var& mu_vel,
                   const Var& std_vel, const Var& mu_vel_prev,
                   const Var& std_vel_prev, double dt);

/// Summed -log N(pos; prev_pos + mu_vel dt, (std_vel dt)^2).
Var pos_nll_penalty(const Matrix& pos, const Matrix& prev_pos, const Var& mu_vel,
                    const Var& std_vel, double dt);

}  // namespace ad

}  // namespace mapo
