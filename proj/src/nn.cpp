#include "mapo/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace mapo::nn {
namespace {

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

}  // namespace

Linear::Linear(std::string name, Eigen::Index in, Eigen::Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = Parameter(name + ".weight", uniform(in, out, bound, rng));
  bias_ = Parameter(name + ".bias", uniform(1, out, bound, rng));
}

Var Linear::forward(Tape& tape, const Var& x) {
  return ad::add(ad::matmul(x, tape.parameter(weight_)), tape.parameter(bias_));
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

BatchNorm::BatchNorm(std::string name, Eigen::Index width)
    : name_(name),
      gamma_(name + ".gamma", Matrix::Ones(1, width)),
      beta_(name + ".beta", Matrix::Zero(1, width)),
      running_mean_(Matrix::Zero(1, width)),
      running_var_(Matrix::Ones(1, width)) {}

Var BatchNorm::forward(Tape& tape, const Var& x, const Context& ctx) {
  Var gamma = tape.parameter(gamma_);
  Var beta = tape.parameter(beta_);
  if (ctx.mode == Mode::kTrain) {
    RowVector mean, var;
    Var y = ad::batch_norm_train(x, gamma, beta, kEps, &mean, &var);
    if (ctx.update_stats) {
      const double n = static_cast<double>(x.rows());
      const RowVector unbiased = n > 1 ? RowVector(var * (n / (n - 1))) : var;
      running_mean_ = (1.0 - kMomentum) * running_mean_ + kMomentum * mean;
      running_var_ = (1.0 - kMomentum) * running_var_ + kMomentum * unbiased;
    }
    return y;
  }
  Matrix shift = -running_mean_;
  Matrix inv = (running_var_.array() + kEps).rsqrt().matrix();
  Var centered = ad::add(x, tape.constant(shift));
  Var normed = ad::mul(centered, tape.constant(inv));
  return ad::add(ad::mul(normed, gamma), beta);
}

void BatchNorm::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void BatchNorm::collect_buffers(std::vector<Buffer>& out) {
  out.push_back({name_ + ".running_mean", &running_mean_});
  out.push_back({name_ + ".running_var", &running_var_});
}

HiddenLayer::HiddenLayer(std::string name, Eigen::Index in, Eigen::Index hidden,
                         bool batch_norm, double dropout, Rng& rng)
    : linear_(name + ".linear", in, hidden, rng),
      norm_(name + ".bn", hidden),
      batch_norm_(batch_norm),
      dropout_(dropout) {
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("dropout must be in [0, 1)");
}

Var HiddenLayer::forward(Tape& tape, const Var& x, const Context& ctx) {
  Var y = linear_.forward(tape, x);
  if (batch_norm_) y = norm_.forward(tape, y, ctx);
  y = ad::relu(y);
  if (ctx.mode == Mode::kTrain && dropout_ > 0.0) {
    if (ctx.rng == nullptr) throw std::logic_error("dropout needs an rng");
    std::bernoulli_distribution keep(1.0 - dropout_);
    Matrix mask(y.rows(), y.cols());
    const double s = 1.0 / (1.0 - dropout_);
    for (Eigen::Index i = 0; i < mask.size(); ++i)
      mask(i) = keep(*ctx.rng) ? s : 0.0;
    y = ad::mul(y, tape.constant(std::move(mask)));
  }
  return y;
}

void HiddenLayer::collect(std::vector<Parameter*>& out) {
  linear_.collect(out);
  if (batch_norm_) norm_.collect(out);
}

void HiddenLayer::collect_buffers(std::vector<Buffer>& out) {
  if (batch_norm_) norm_.collect_buffers(out);
}

GaussianMlp::GaussianMlp(std::string name, Eigen::Index in, Eigen::Index hidden,
                         Eigen::Index out, bool batch_norm, double dropout,
                         double std_floor, Rng& rng)
    : hidden_(name + ".hidden", in, hidden, batch_norm, dropout, rng),
      mean_(name + ".mean", hidden, out, rng),
      std_(name + ".std", hidden, out, rng),
      output_scale_(RowVector::Ones(out)),
      std_floor_(std_floor) {}

GaussianOut GaussianMlp::forward(Tape& tape, const Var& x, const Context& ctx) {
  Var h = hidden_.forward(tape, x, ctx);
  Var mean = mean_.forward(tape, h);
  Var std = ad::softplus(std_.forward(tape, h));
  if (!output_scale_.isOnes()) {
    Var s = tape.constant(output_scale_);
    mean = ad::mul(mean, s);
    std = ad::mul(std, s);
  }
  std = ad::add_scalar(std, std_floor_);
  return {mean, std};
}

void GaussianMlp::collect(std::vector<Parameter*>& out) {
  hidden_.collect(out);
  mean_.collect(out);
  std_.collect(out);
}

void GaussianMlp::collect_buffers(std::vector<Buffer>& out) {
  hidden_.collect_buffers(out);
}

CategoricalMlp::CategoricalMlp(std::string name, Eigen::Index in,
                               Eigen::Index hidden, Eigen::Index classes,
                               bool batch_norm, double dropout, Rng& rng)
    : hidden_(name + ".hidden", in, hidden, batch_norm, dropout, rng),
      head_(name + ".logits", hidden, classes, rng) {}

Var CategoricalMlp::forward(Tape& tape, const Var& x, const Context& ctx) {
  return head_.forward(tape, hidden_.forward(tape, x, ctx));
}

void CategoricalMlp::collect(std::vector<Parameter*>& out) {
  hidden_.collect(out);
  head_.collect(out);
}

void CategoricalMlp::collect_buffers(std::vector<Buffer>& out) {
  hidden_.collect_buffers(out);
}

GruCell::GruCell(std::string name, Eigen::Index in, Eigen::Index hidden,
                 Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  w_input_ = Parameter(name + ".w_input", uniform(in, 3 * hidden, bound, rng));
  w_hidden_ =
      Parameter(name + ".w_hidden", uniform(hidden, 3 * hidden, bound, rng));
  b_input_ = Parameter(name + ".b_input", uniform(1, 3 * hidden, bound, rng));
  b_hidden_ = Parameter(name + ".b_hidden", uniform(1, 3 * hidden, bound, rng));
}

Var GruCell::forward(Tape& tape, const Var& x, const Var& h) {
  const Eigen::Index n = hidden();
  Var gi = ad::add(ad::matmul(x, tape.parameter(w_input_)),
                   tape.parameter(b_input_));
  Var gh = ad::add(ad::matmul(h, tape.parameter(w_hidden_)),
                   tape.parameter(b_hidden_));
  Var reset = ad::sigmoid(
      ad::add(ad::slice_cols(gi, 0, n), ad::slice_cols(gh, 0, n)));
  Var update = ad::sigmoid(
      ad::add(ad::slice_cols(gi, n, n), ad::slice_cols(gh, n, n)));
  Var cand = ad::tanh(ad::add(ad::slice_cols(gi, 2 * n, n),
                              ad::mul(reset, ad::slice_cols(gh, 2 * n, n))));
  // h' = cand + update * (h - cand)
  return ad::add(cand, ad::mul(update, ad::sub(h, cand)));
}

void GruCell::collect(std::vector<Parameter*>& out) {
  out.push_back(&w_input_);
  out.push_back(&w_hidden_);
  out.push_back(&b_input_);
  out.push_back(&b_hidden_);
}

StackedGru::StackedGru(std::string name, Eigen::Index in, Eigen::Index hidden,
                       int layers, Rng& rng)
    : hidden_(hidden) {
  if (layers < 1) throw std::invalid_argument("GRU needs at least one layer");
  for (int l = 0; l < layers; ++l)
    cells_.emplace_back(name + ".layer" + std::to_string(l), l == 0 ? in : hidden,
                        hidden, rng);
}

std::vector<Var> StackedGru::forward(Tape& tape, const Var& x,
                                     const std::vector<Var>& h) {
  if (h.size() != cells_.size())
    throw std::invalid_argument("GRU state layer count mismatch");
  std::vector<Var> next;
  next.reserve(h.size());
  Var input = x;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    input = cells_[l].forward(tape, input, h[l]);
    next.push_back(input);
  }
  return next;
}

std::vector<Matrix> StackedGru::zero_state(Eigen::Index batch) const {
  return std::vector<Matrix>(cells_.size(), Matrix::Zero(batch, hidden_));
}

void StackedGru::collect(std::vector<Parameter*>& out) {
  for (auto& c : cells_) c.collect(out);
}

void adam_step(const std::vector<Parameter*>& params, const AdamConfig& cfg,
               long step) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (Parameter* p : params) {
    p->adam_m = cfg.beta1 * p->adam_m + (1.0 - cfg.beta1) * p->grad;
    p->adam_v =
        cfg.beta2 * p->adam_v + (1.0 - cfg.beta2) * p->grad.cwiseAbs2();
    p->value.array() -= cfg.learning_rate * (p->adam_m.array() / c1) /
                        ((p->adam_v.array() / c2).sqrt() + cfg.eps);
  }
}

double clip_grad_norm(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter* p : params) p->grad *= s;
  }
  return norm;
}

void zero_grad(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace mapo::nn
