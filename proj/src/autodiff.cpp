#include "mapo/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace mapo::ad {

Parameter::Parameter(std::string n, Matrix v)
    : name(std::move(n)),
      value(std::move(v)),
      grad(Matrix::Zero(value.rows(), value.cols())),
      adam_m(Matrix::Zero(value.rows(), value.cols())),
      adam_v(Matrix::Zero(value.rows(), value.cols())) {}

void Parameter::zero_grad() { grad.setZero(value.rows(), value.cols()); }

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Parameter& p) {
  if (no_grad_) return constant(p.value);
  auto it = param_ids_.find(&p);
  if (it != param_ids_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_ids_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward fn) {
  return record(std::move(value),
                std::span<const Var>(parents.begin(), parents.size()),
                std::move(fn));
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backward fn) {
  Node n;
  n.value = std::move(value);
  if (!no_grad_) {
    for (const Var& p : parents) {
      if (p.tape() != this) throw std::logic_error("Var from a different tape");
      if (nodes_[p.id()].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Matrix& g) { accumulate_expr(id, g); }

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw std::logic_error("root from a different tape");
  if (root.rows() != 1 || root.cols() != 1)
    throw std::invalid_argument("backward root must be 1x1");
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  nodes_[root.id()].has_grad = true;
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, n.grad, n.value);
    }
  }
}

namespace {

enum class Shape { kSame, kRow, kCol, kScalar };

Shape broadcast_shape(const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Shape::kSame;
  if (b.rows() == 1 && b.cols() == 1) return Shape::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Shape::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Shape::kCol;
  throw std::invalid_argument("incompatible shapes " + std::to_string(a.rows()) +
                              "x" + std::to_string(a.cols()) + " and " +
                              std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()));
}

Matrix expand(const Matrix& b, Shape s, Eigen::Index rows, Eigen::Index cols) {
  switch (s) {
    case Shape::kSame:
      return b;
    case Shape::kRow:
      return b.replicate(rows, 1);
    case Shape::kCol:
      return b.replicate(1, cols);
    case Shape::kScalar:
      return Matrix::Constant(rows, cols, b(0, 0));
  }
  return b;
}

Matrix reduce(const Matrix& g, Shape s) {
  switch (s) {
    case Shape::kSame:
      return g;
    case Shape::kRow:
      return g.colwise().sum();
    case Shape::kCol:
      return g.rowwise().sum();
    case Shape::kScalar:
      return Matrix::Constant(1, 1, g.sum());
  }
  return g;
}

template <typename F, typename D>
Var unary(const Var& a, F forward, D derivative) {
  Tape& t = *a.tape();
  const int ia = a.id();
  Matrix out = a.value().unaryExpr(forward);
  return t.record(std::move(out), {a},
                  [ia, derivative](Tape& tp, const Matrix& g, const Matrix& y) {
                    const Matrix& x = tp.value(ia);
                    Matrix d(x.rows(), x.cols());
                    for (Eigen::Index i = 0; i < x.size(); ++i)
                      d(i) = derivative(x(i), y(i));
                    tp.accumulate_expr(ia, g.cwiseProduct(d));
                  });
}

double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul shape mismatch");
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), {a, b},
                  [ia, ib](Tape& tp, const Matrix& g, const Matrix&) {
                    if (tp.requires_grad(ia))
                      tp.accumulate_expr(ia, g * tp.value(ib).transpose());
                    if (tp.requires_grad(ib))
                      tp.accumulate_expr(ib, tp.value(ia).transpose() * g);
                  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  const Shape s = broadcast_shape(a.value(), b.value());
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value();
  switch (s) {
    case Shape::kSame: out += b.value(); break;
    case Shape::kRow: out.rowwise() += b.value().row(0); break;
    case Shape::kCol: out.colwise() += b.value().col(0); break;
    case Shape::kScalar: out.array() += b.value()(0, 0); break;
  }
  return t.record(std::move(out), {a, b},
                  [ia, ib, s](Tape& tp, const Matrix& g, const Matrix&) {
                    tp.accumulate(ia, g);
                    if (tp.requires_grad(ib)) tp.accumulate(ib, reduce(g, s));
                  });
}

Var sub(const Var& a, const Var& b) { return add(a, neg(b)); }

Var mul(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  const Shape s = broadcast_shape(a.value(), b.value());
  const int ia = a.id(), ib = b.id();
  Matrix bb = expand(b.value(), s, a.rows(), a.cols());
  Matrix out = a.value().cwiseProduct(bb);
  return t.record(std::move(out), {a, b},
                  [ia, ib, s](Tape& tp, const Matrix& g, const Matrix&) {
                    const Matrix& av = tp.value(ia);
                    const Matrix& bv = tp.value(ib);
                    if (tp.requires_grad(ia))
                      tp.accumulate_expr(
                          ia, g.cwiseProduct(expand(bv, s, av.rows(), av.cols())));
                    if (tp.requires_grad(ib))
                      tp.accumulate(ib, reduce(g.cwiseProduct(av), s));
                  });
}

Var div(const Var& a, const Var& b) {
  Tape& t = *a.tape();
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("div requires equal shapes");
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseQuotient(b.value());
  return t.record(std::move(out), {a, b},
                  [ia, ib](Tape& tp, const Matrix& g, const Matrix& y) {
                    const Matrix& bv = tp.value(ib);
                    if (tp.requires_grad(ia))
                      tp.accumulate_expr(ia, g.cwiseQuotient(bv));
                    if (tp.requires_grad(ib))
                      tp.accumulate_expr(
                          ib, -g.cwiseProduct(y).cwiseQuotient(bv));
                  });
}

Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.record(a.value() * s, {a},
                  [ia, s](Tape& tp, const Matrix& g, const Matrix&) {
                    tp.accumulate_expr(ia, g * s);
                  });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = *a.tape();
  const int ia = a.id();
  Matrix out = a.value().array() + s;
  return t.record(std::move(out), {a},
                  [ia](Tape& tp, const Matrix& g, const Matrix&) {
                    tp.accumulate(ia, g);
                  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var square(const Var& a) {
  return unary(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var exp(const Var& a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return stable_softplus(x); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var sum(const Var& a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return t.record(Matrix::Constant(1, 1, a.value().sum()), {a},
                  [ia, r, c](Tape& tp, const Matrix& g, const Matrix&) {
                    tp.accumulate_expr(ia, Matrix::Constant(r, c, g(0, 0)));
                  });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  Tape& t = *parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    layout.emplace_back(p.id(), offset);
    offset += p.cols();
  }
  return t.record(std::move(out), parts,
                  [layout](Tape& tp, const Matrix& g, const Matrix&) {
                    for (const auto& [id, off] : layout) {
                      if (!tp.requires_grad(id)) continue;
                      tp.accumulate_expr(id,
                                         g.middleCols(off, tp.value(id).cols()));
                    }
                  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  Tape& t = *a.tape();
  if (start < 0 || start + count > a.cols())
    throw std::invalid_argument("slice out of range");
  const int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  Matrix out = a.value().middleCols(start, count);
  return t.record(std::move(out), {a},
                  [ia, r, c, start, count](Tape& tp, const Matrix& g,
                                           const Matrix&) {
                    Matrix full = Matrix::Zero(r, c);
                    full.middleCols(start, count) = g;
                    tp.accumulate(ia, full);
                  });
}

Var straight_through(const Matrix& hard, const Var& soft) {
  Tape& t = *soft.tape();
  if (hard.rows() != soft.rows() || hard.cols() != soft.cols())
    throw std::invalid_argument("straight-through shape mismatch");
  const int is = soft.id();
  return t.record(hard, {soft},
                  [is](Tape& tp, const Matrix& g, const Matrix&) {
                    tp.accumulate(is, g);
                  });
}

Var slot_linear(const Var& x, const Var& w, Eigen::Index slots) {
  Tape& t = *x.tape();
  const Eigen::Index in = w.rows();
  const Eigen::Index out_w = w.cols() / slots;
  if (x.cols() != slots * in || w.cols() != slots * out_w)
    throw std::invalid_argument("slot_linear shape mismatch");
  Matrix out(x.rows(), slots * out_w);
  for (Eigen::Index k = 0; k < slots; ++k)
    out.middleCols(k * out_w, out_w).noalias() =
        x.value().middleCols(k * in, in) * w.value().middleCols(k * out_w, out_w);
  const int ix = x.id(), iw = w.id();
  return t.record(
      std::move(out), {x, w},
      [ix, iw, slots, in, out_w](Tape& tp, const Matrix& g, const Matrix&) {
        const Matrix& xv = tp.value(ix);
        const Matrix& wv = tp.value(iw);
        if (tp.requires_grad(ix)) {
          Matrix gx(xv.rows(), xv.cols());
          for (Eigen::Index k = 0; k < slots; ++k)
            gx.middleCols(k * in, in).noalias() =
                g.middleCols(k * out_w, out_w) *
                wv.middleCols(k * out_w, out_w).transpose();
          tp.accumulate(ix, gx);
        }
        if (tp.requires_grad(iw)) {
          Matrix gw(wv.rows(), wv.cols());
          for (Eigen::Index k = 0; k < slots; ++k)
            gw.middleCols(k * out_w, out_w).noalias() =
                xv.middleCols(k * in, in).transpose() *
                g.middleCols(k * out_w, out_w);
          tp.accumulate(iw, gw);
        }
      });
}

Var block_gate(const Var& gate, const Var& f, Eigen::Index block) {
  Tape& t = *f.tape();
  const Eigen::Index slots = gate.cols();
  if (f.cols() != slots * block || f.rows() != gate.rows())
    throw std::invalid_argument("block_gate shape mismatch");
  Matrix out(f.rows(), f.cols());
  for (Eigen::Index k = 0; k < slots; ++k)
    out.middleCols(k * block, block) =
        f.value().middleCols(k * block, block).array().colwise() *
        gate.value().col(k).array();
  const int ig = gate.id(), iff = f.id();
  return t.record(
      std::move(out), {gate, f},
      [ig, iff, slots, block](Tape& tp, const Matrix& g, const Matrix&) {
        const Matrix& gv = tp.value(ig);
        const Matrix& fv = tp.value(iff);
        if (tp.requires_grad(iff)) {
          Matrix gf(fv.rows(), fv.cols());
          for (Eigen::Index k = 0; k < slots; ++k)
            gf.middleCols(k * block, block) =
                g.middleCols(k * block, block).array().colwise() *
                gv.col(k).array();
          tp.accumulate(iff, gf);
        }
        if (tp.requires_grad(ig)) {
          Matrix gg(gv.rows(), gv.cols());
          for (Eigen::Index k = 0; k < slots; ++k)
            gg.col(k) = g.middleCols(k * block, block)
                            .cwiseProduct(fv.middleCols(k * block, block))
                            .rowwise()
                            .sum();
          tp.accumulate(ig, gg);
        }
      });
}

Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta,
                     double eps, RowVector* batch_mean, RowVector* batch_var) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  const double n = static_cast<double>(xv.rows());
  RowVector mean = xv.colwise().mean();
  Matrix centered = xv.rowwise() - mean;
  RowVector var = centered.array().square().colwise().mean();
  RowVector inv_std = (var.array() + eps).rsqrt();
  Matrix xhat = centered.array().rowwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  if (batch_mean) *batch_mean = mean;
  if (batch_var) *batch_var = var;
  const int ix = x.id(), ig = gamma.id(), ib = beta.id();
  return t.record(
      std::move(out), {x, gamma, beta},
      [ix, ig, ib, xhat, inv_std, n](Tape& tp, const Matrix& g, const Matrix&) {
        if (tp.requires_grad(ib)) tp.accumulate_expr(ib, g.colwise().sum());
        if (tp.requires_grad(ig))
          tp.accumulate_expr(ig, g.cwiseProduct(xhat).colwise().sum());
        if (tp.requires_grad(ix)) {
          const RowVector gam = tp.value(ig).row(0);
          Matrix dxhat = g.array().rowwise() * gam.array();
          RowVector sum_d = dxhat.colwise().sum();
          RowVector sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
          Matrix dx = (n * dxhat).rowwise() - sum_d;
          dx -= (xhat.array().rowwise() * sum_dx.array()).matrix();
          dx = dx.array().rowwise() * (inv_std.array() / n);
          tp.accumulate(ix, dx);
        }
      });
}

Var log_softmax(const Var& logits) {
  Tape& t = *logits.tape();
  const Matrix& z = logits.value();
  Eigen::VectorXd mx = z.rowwise().maxCoeff();
  Matrix shifted = z.colwise() - mx;
  Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log();
  Matrix out = shifted.colwise() - lse;
  const int il = logits.id();
  return t.record(std::move(out), {logits},
                  [il](Tape& tp, const Matrix& g, const Matrix& y) {
                    Matrix p = y.array().exp();
                    Eigen::VectorXd gs = g.rowwise().sum();
                    Matrix d = g - (p.array().colwise() * gs.array()).matrix();
                    tp.accumulate(il, d);
                  });
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
    throw std::invalid_argument("cross_entropy label count mismatch");
  Var lsm = log_softmax(logits);
  Matrix pick = Matrix::Zero(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= logits.cols())
      throw std::invalid_argument("cross_entropy label out of range");
    pick(static_cast<Eigen::Index>(i), labels[i]) = -1.0;
  }
  Tape& t = *logits.tape();
  return sum(mul(lsm, t.constant(std::move(pick))));
}

}  // namespace mapo::ad
