// Small neural building blocks on top of the autodiff tape: linear layers,
// batch normalisation, Gaussian and categorical heads, stacked GRUs and Adam.
#pragma once

#include "mapo/autodiff.hpp"

#include <random>
#include <string>
#include <vector>

namespace mapo::nn {

using ad::Matrix;
using ad::Parameter;
using ad::RowVector;
using ad::Tape;
using ad::Var;
using Rng = std::mt19937_64;

enum class Mode { kTrain, kEval };

/// Forward-pass context shared by every module in one evaluation.
struct Context {
  Mode mode = Mode::kEval;
  Rng* rng = nullptr;        // dropout masks; required when dropout > 0 in kTrain
  bool update_stats = true;  // batch-norm running statistics in kTrain
};

/// Non-trainable state that must round-trip through checkpoints.
struct Buffer {
  std::string name;
  Matrix* value;
};

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, Eigen::Index in, Eigen::Index out, Rng& rng);
  Var forward(Tape& tape, const Var& x);
  void collect(std::vector<Parameter*>& out);
  Eigen::Index in() const { return weight_.value.rows(); }
  Eigen::Index out() const { return weight_.value.cols(); }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;
  Parameter bias_;
};

class BatchNorm {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm() = default;
  BatchNorm(std::string name, Eigen::Index width);
  Var forward(Tape& tape, const Var& x, const Context& ctx);
  void collect(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<Buffer>& out);
  Matrix& running_mean() { return running_mean_; }
  Matrix& running_var() { return running_var_; }

 private:
  std::string name_;
  Parameter gamma_;
  Parameter beta_;
  Matrix running_mean_;
  Matrix running_var_;
};

struct GaussianOut {
  Var mean;
  Var std;
};

/// Hidden layer shared by the feed-forward heads: linear, optional batch
/// norm, ReLU, optional dropout.
class HiddenLayer {
 public:
  HiddenLayer() = default;
  HiddenLayer(std::string name, Eigen::Index in, Eigen::Index hidden,
              bool batch_norm, double dropout, Rng& rng);
  Var forward(Tape& tape, const Var& x, const Context& ctx);
  void collect(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<Buffer>& out);
  Linear& linear() { return linear_; }
  BatchNorm& norm() { return norm_; }
  bool has_batch_norm() const { return batch_norm_; }

 private:
  Linear linear_;
  BatchNorm norm_;
  bool batch_norm_ = false;
  double dropout_ = 0.0;
};

/// Two-layer network producing a diagonal Gaussian. The standard deviation
/// is `scale * softplus(raw) + floor`; the mean is `scale * raw_mean`.
class GaussianMlp {
 public:
  GaussianMlp() = default;
  GaussianMlp(std::string name, Eigen::Index in, Eigen::Index hidden,
              Eigen::Index out, bool batch_norm, double dropout, double std_floor,
              Rng& rng);
  GaussianOut forward(Tape& tape, const Var& x, const Context& ctx);
  void set_output_scale(RowVector scale) { output_scale_ = std::move(scale); }
  const RowVector& output_scale() const { return output_scale_; }
  void collect(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<Buffer>& out);
  HiddenLayer& hidden() { return hidden_; }
  Linear& mean_head() { return mean_; }
  Linear& std_head() { return std_; }
  double std_floor() const { return std_floor_; }

 private:
  HiddenLayer hidden_;
  Linear mean_;
  Linear std_;
  RowVector output_scale_;
  double std_floor_ = 0.0;
};

/// Two-layer network producing unnormalised categorical logits.
class CategoricalMlp {
 public:
  CategoricalMlp() = default;
  CategoricalMlp(std::string name, Eigen::Index in, Eigen::Index hidden,
                 Eigen::Index classes, bool batch_norm, double dropout, Rng& rng);
  Var forward(Tape& tape, const Var& x, const Context& ctx);
  void collect(std::vector<Parameter*>& out);
  void collect_buffers(std::vector<Buffer>& out);
  HiddenLayer& hidden() { return hidden_; }
  Linear& head() { return head_; }

 private:
  HiddenLayer hidden_;
  Linear head_;
};

/// Gated recurrent unit with reset/update/candidate gates laid out as
/// [r | u | n] along the columns of the stacked weight matrices.
class GruCell {
 public:
  GruCell() = default;
  GruCell(std::string name, Eigen::Index in, Eigen::Index hidden, Rng& rng);
  Var forward(Tape& tape, const Var& x, const Var& h);
  void collect(std::vector<Parameter*>& out);
  Eigen::Index hidden() const { return w_hidden_.value.rows(); }
  Parameter& w_input() { return w_input_; }
  Parameter& w_hidden() { return w_hidden_; }
  Parameter& b_input() { return b_input_; }
  Parameter& b_hidden() { return b_hidden_; }

 private:
  Parameter w_input_;
  Parameter w_hidden_;
  Parameter b_input_;
  Parameter b_hidden_;
};

class StackedGru {
 public:
  StackedGru() = default;
  StackedGru(std::string name, Eigen::Index in, Eigen::Index hidden,
             int layers, Rng& rng);
  /// Returns the new per-layer states; the last entry is the top layer.
  std::vector<Var> forward(Tape& tape, const Var& x, const std::vector<Var>& h);
  std::vector<Matrix> zero_state(Eigen::Index batch) const;
  void collect(std::vector<Parameter*>& out);
  int layers() const { return static_cast<int>(cells_.size()); }
  Eigen::Index hidden() const { return hidden_; }
  GruCell& cell(int i) { return cells_[i]; }

 private:
  std::vector<GruCell> cells_;
  Eigen::Index hidden_ = 0;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam update using the accumulated Parameter::grad; `step` is 1-based.
void adam_step(const std::vector<Parameter*>& params, const AdamConfig& cfg,
               long step);

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm);

void zero_grad(const std::vector<Parameter*>& params);

}  // namespace mapo::nn
