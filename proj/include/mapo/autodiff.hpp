// Reverse-mode automatic differentiation over dense row-batched matrices.
//
// Every value on the tape is an Eigen matrix whose rows index the batch and
// whose columns index features. Operations record a closure that propagates
// the output gradient to their parents; Tape::backward replays them in
// reverse order. Parameters are leaves whose gradients are accumulated into
// the owning Parameter after the backward pass.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mapo::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// A trainable tensor with its gradient and Adam moments.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;

  Parameter() = default;
  Parameter(std::string n, Matrix v);
  void zero_grad();
  Eigen::Index size() const { return value.size(); }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad,
                                      const Matrix& out_value)>;

  /// In no-grad mode parameters enter as constants and no closures are kept.
  explicit Tape(bool no_grad = false) : no_grad_(no_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Parameter& p);

  /// Records an op. `parents` decide whether the result needs a gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, Backward fn);
  Var record(Matrix value, std::span<const Var> parents, Backward fn);

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool no_grad() const { return no_grad_; }

  /// Adds `g` into the gradient slot of node `id` (no-op for constants).
  void accumulate(int id, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates; parameter
  /// gradients are added to Parameter::grad.
  void backward(const Var& root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
    bool has_grad = false;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_ids_;
  bool no_grad_;
};

// ---- elementwise and linear algebra ----------------------------------------

Var matmul(const Var& a, const Var& b);
/// a + b; b may be the same shape, a 1xN row (broadcast over rows) or 1x1.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise product; b may be same shape, a 1xN row or an Bx1 column.
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var square(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var softplus(const Var& a);

/// Sum of all entries as a 1x1.
Var sum(const Var& a);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);

/// Forward value `hard`, gradient routed to `soft` unchanged.
Var straight_through(const Matrix& hard, const Var& soft);

/// Per-slot linear map: x is B x (slots*in), w is in x (slots*out); slot k of
/// the output only sees slot k of the input through columns k*out.. of w.
Var slot_linear(const Var& x, const Var& w, Eigen::Index slots);

/// Scales block k (width `block`) of f by column k of `gate` (B x slots).
Var block_gate(const Var& gate, const Var& f, Eigen::Index block);

/// Batch normalisation with batch statistics. Writes the batch mean and
/// biased variance to the out-params for running-stat updates.
Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta,
                     double eps, RowVector* batch_mean, RowVector* batch_var);

/// Row-wise log-softmax.
Var log_softmax(const Var& logits);

/// Sum over rows of -log softmax(logits)[label].
Var cross_entropy(const Var& logits, std::span<const int> labels);

}  // namespace mapo::ad
