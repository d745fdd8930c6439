// Binary partial observation: per-slot state embedding, a dual-channel
// projection whose Gumbel-Softmax sample decides which agents reach the
// policy, and overrides used for counterfactual rollouts.
#pragma once

#include "mapo/nn.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mapo {

/// Standard Gumbel draw -log(-log u) with u kept inside (eps, 1 - eps).
double gumbel_noise(std::mt19937_64& rng);

/// softmax((log_softmax(logits) + eps) / tau) for explicit noise.
Eigen::VectorXd gumbel_softmax(const Eigen::VectorXd& logits,
                               const Eigen::VectorXd& eps, double tau);
/// Same with fresh Gumbel noise.
Eigen::VectorXd gumbel_softmax_sample(const Eigen::VectorXd& logits, double tau,
                                      std::mt19937_64& rng);

enum class GateMode { kRelaxed, kHard };

struct ObservationConfig {
  int slots = 11;        // K agents including self and ball
  int state_dim = 6;     // d_s
  int embed_dim = 32;    // d_e
  double temperature = 1.0;

  void validate() const;
};

/// One gate evaluation for a batch: rows index the batch, columns the slots.
struct GateSample {
  ad::Matrix soft;  // channel-1 probability of the relaxed sample
  ad::Matrix hard;  // argmax indicator
};

class ObservationNet {
 public:
  ObservationNet() = default;
  ObservationNet(std::string name, const ObservationConfig& config, nn::Rng& rng);

  const ObservationConfig& config() const { return config_; }

  /// Per-slot channel logits (l1, l2), each B x K.
  std::pair<ad::Var, ad::Var> channel_logits(ad::Tape& tape, const ad::Var& state);
  /// Embedded blocks f, B x (K d_e).
  ad::Var embed(ad::Tape& tape, const ad::Var& state);

  /// Relaxed gate sigmoid((l1 - l2 + eps1 - eps2) / tau); in hard mode the
  /// forward value is the indicator and gradients follow the relaxed sample.
  ad::Var gate(ad::Tape& tape, const ad::Var& state, GateMode mode,
               const ad::Matrix& eps1, const ad::Matrix& eps2);

  /// o = [b_1 f_1, ..., b_K f_K].
  ad::Var observe(ad::Tape& tape, const ad::Var& b, const ad::Var& state);

  /// Draws Gumbel noise for a B x K gate (two matrices, channel 1 and 2).
  std::pair<ad::Matrix, ad::Matrix> draw_noise(Eigen::Index batch,
                                               std::mt19937_64& rng) const;

  /// Numeric gate without a tape.
  GateSample sample(const ad::Matrix& state, std::mt19937_64& rng);

  void collect(std::vector<ad::Parameter*>& out);
  ad::Parameter& embed_weight() { return w_emb_; }
  ad::Parameter& embed_bias() { return b_emb_; }
  ad::Parameter& dual_weight(int channel) { return channel == 0 ? w_dual1_ : w_dual2_; }
  ad::Parameter& dual_bias(int channel) { return channel == 0 ? b_dual1_ : b_dual2_; }

 private:
  ObservationConfig config_;
  ad::Parameter w_emb_;    // d_s x (K d_e)
  ad::Parameter b_emb_;    // 1 x (K d_e)
  ad::Parameter w_dual1_;  // d_s x K
  ad::Parameter w_dual2_;
  ad::Parameter b_dual1_;  // 1 x K
  ad::Parameter b_dual2_;
};

/// Replacement for the sampled hard gate during rollout.
class GateOverride {
 public:
  enum class Kind { kFixed, kSchedule, kOneHotArgmax };

  /// The same vector at every step and for every role.
  static GateOverride fixed(Eigen::RowVectorXd b);
  /// schedule[t] holds one row per role; steps beyond the schedule or with
  /// an empty matrix keep the model's own gate.
  static GateOverride schedule(std::vector<Eigen::MatrixXd> per_step);
  /// One-hot at the slot with the highest relaxed coefficient.
  static GateOverride one_hot_argmax();

  Kind kind() const { return kind_; }
  /// Gate used at step t for `role` given the model's own relaxed and hard
  /// samples; nullopt means no override at this step.
  std::optional<Eigen::RowVectorXd> resolve(int t, int role,
                                            const Eigen::RowVectorXd& soft) const;
  /// Throws std::invalid_argument unless every provided vector has length k.
  void check_slots(int k) const;

 private:
  Kind kind_ = Kind::kFixed;
  Eigen::RowVectorXd fixed_;
  std::vector<Eigen::MatrixXd> schedule_;
};

/// Validates the override length against the slot count.
GateOverride force_observation(const Eigen::RowVectorXd& b_override, int slots);

struct GateLogEntry {
  int sample = 0;
  int t = 0;
  int role = 0;
  Eigen::RowVectorXd b;
};
using GateLog = std::vector<GateLogEntry>;

/// CSV with header sample,t,role,b0..b{K-1}.
void write_gate_log(std::ostream& out, const GateLog& log);
GateLog read_gate_log(std::istream& in);

}  // namespace mapo
