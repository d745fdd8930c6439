#include "mapo/role_assignment.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

namespace mapo {

double RoleModel::log_density(int role,
                              const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  const auto mu = means.row(role);
  const auto var = variances.row(role);
  double s = 0.0;
  for (Eigen::Index d = 0; d < mu.size(); ++d) {
    const double diff = x(d) - mu(d);
    s += -0.5 * (std::log(2.0 * std::numbers::pi * var(d)) + diff * diff / var(d));
  }
  return s;
}

namespace {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

struct Posterior {
  MatrixXd gamma;  // T x n
  MatrixXd xi_sum; // n x n
  double log_likelihood = 0.0;
};

MatrixXd emission_log(const RoleModel& m, const FeatureSequence& x) {
  MatrixXd lb(x.rows(), m.n_roles);
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    for (int r = 0; r < m.n_roles; ++r) lb(t, r) = m.log_density(r, x.row(t));
  return lb;
}

Posterior forward_backward(const RoleModel& m, const FeatureSequence& x) {
  const Eigen::Index T = x.rows();
  const int n = m.n_roles;
  const MatrixXd lb = emission_log(m, x);
  MatrixXd b(T, n);
  VectorXd shift(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    shift(t) = lb.row(t).maxCoeff();
    b.row(t) = (lb.row(t).array() - shift(t)).exp();
  }
  MatrixXd alpha(T, n), beta(T, n);
  VectorXd c(T);
  alpha.row(0) = m.initial.transpose().cwiseProduct(b.row(0));
  c(0) = alpha.row(0).sum();
  alpha.row(0) /= c(0);
  for (Eigen::Index t = 1; t < T; ++t) {
    alpha.row(t) = (alpha.row(t - 1) * m.transition).cwiseProduct(b.row(t));
    c(t) = alpha.row(t).sum();
    alpha.row(t) /= c(t);
  }
  beta.row(T - 1).setOnes();
  for (Eigen::Index t = T - 2; t >= 0; --t)
    beta.row(t) =
        (m.transition * b.row(t + 1).cwiseProduct(beta.row(t + 1)).transpose())
            .transpose() /
        c(t + 1);
  Posterior p;
  p.gamma = alpha.cwiseProduct(beta);
  for (Eigen::Index t = 0; t < T; ++t) p.gamma.row(t) /= p.gamma.row(t).sum();
  p.xi_sum = MatrixXd::Zero(n, n);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const RowVectorXd next = b.row(t + 1).cwiseProduct(beta.row(t + 1)) / c(t + 1);
    p.xi_sum += (alpha.row(t).transpose() * next).cwiseProduct(m.transition);
  }
  p.log_likelihood = c.array().log().sum() + shift.sum();
  return p;
}

MatrixXd pooled(const std::vector<FeatureSequence>& seqs, std::size_t cap,
                std::mt19937_64& rng) {
  Eigen::Index total = 0;
  for (const auto& s : seqs) total += s.rows();
  const Eigen::Index dim = seqs.front().cols();
  MatrixXd all(total, dim);
  Eigen::Index off = 0;
  for (const auto& s : seqs) {
    all.middleRows(off, s.rows()) = s;
    off += s.rows();
  }
  if (static_cast<std::size_t>(total) <= cap) return all;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(total));
  for (Eigen::Index i = 0; i < total; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  MatrixXd sub(static_cast<Eigen::Index>(cap), dim);
  for (std::size_t i = 0; i < cap; ++i) sub.row(i) = all.row(idx[i]);
  return sub;
}

MatrixXd kmeans_init(const MatrixXd& pts, int k, std::mt19937_64& rng) {
  const Eigen::Index n = pts.rows();
  MatrixXd centers(k, pts.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = pts.row(first(rng));
  VectorXd d2 = (pts.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng), acc = 0.0;
      for (pick = 0; pick < n - 1; ++pick) {
        acc += d2(pick);
        if (acc >= target) break;
      }
    } else {
      pick = first(rng);
    }
    centers.row(c) = pts.row(pick);
    d2 = d2.cwiseMin((pts.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  for (int iter = 0; iter < 10; ++iter) {
    MatrixXd sums = MatrixXd::Zero(k, pts.cols());
    VectorXd counts = VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      (centers.rowwise() - pts.row(i)).rowwise().squaredNorm().minCoeff(&best);
      sums.row(best) += pts.row(i);
      counts(best) += 1.0;
    }
    for (int c = 0; c < k; ++c)
      if (counts(c) > 0) centers.row(c) = sums.row(c) / counts(c);
  }
  return centers;
}

}  // namespace

double hmm_log_likelihood(const RoleModel& model,
                          const std::vector<FeatureSequence>& sequences) {
  double ll = 0.0;
  for (const auto& s : sequences)
    if (s.rows() > 0) ll += forward_backward(model, s).log_likelihood;
  return ll;
}

HmmFit fit_role_hmm(const std::vector<FeatureSequence>& sequences, int n_roles,
                    const HmmFitOptions& options) {
  if (n_roles < 1) throw std::invalid_argument("n_roles must be >= 1");
  std::vector<FeatureSequence> seqs;
  for (const auto& s : sequences) {
    if (!s.allFinite()) throw std::invalid_argument("HMM features must be finite");
    if (s.rows() > 0) seqs.push_back(s);
  }
  if (seqs.empty()) throw std::invalid_argument("no feature sequences");
  const Eigen::Index dim = seqs.front().cols();
  for (const auto& s : seqs)
    if (s.cols() != dim) throw std::invalid_argument("feature dimension mismatch");

  std::mt19937_64 rng(options.seed);
  const MatrixXd pts = pooled(seqs, 5000, rng);

  HmmFit fit;
  RoleModel& m = fit.model;
  m.n_roles = n_roles;
  m.initial = VectorXd::Constant(n_roles, 1.0 / n_roles);
  if (n_roles == 1) {
    m.transition = MatrixXd::Ones(1, 1);
  } else {
    m.transition = MatrixXd::Constant(n_roles, n_roles, 0.1 / (n_roles - 1));
    m.transition.diagonal().setConstant(0.9);
  }
  m.means = kmeans_init(pts, n_roles, rng);
  const RowVectorXd global_mean = pts.colwise().mean();
  const RowVectorXd global_var =
      (pts.rowwise() - global_mean).array().square().colwise().mean();
  m.variances = global_var.cwiseMax(RoleModel::kVarianceFloor).replicate(n_roles, 1);

  for (int iter = 0; iter < options.max_iters; ++iter) {
    VectorXd init_acc = VectorXd::Zero(n_roles);
    MatrixXd xi_acc = MatrixXd::Zero(n_roles, n_roles);
    VectorXd w_acc = VectorXd::Zero(n_roles);
    MatrixXd x_acc = MatrixXd::Zero(n_roles, dim);
    double ll = 0.0;
    std::vector<Posterior> posts;
    posts.reserve(seqs.size());
    // Posteriors are independent per sequence; reduced in input order.
    for (const auto& s : seqs) posts.push_back(forward_backward(m, s));
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const Posterior& p = posts[i];
      ll += p.log_likelihood;
      init_acc += p.gamma.row(0).transpose();
      xi_acc += p.xi_sum;
      w_acc += p.gamma.colwise().sum().transpose();
      x_acc += p.gamma.transpose() * seqs[i];
    }
    if (!fit.log_likelihood.empty()) {
      const double prev = fit.log_likelihood.back();
      if (ll < prev - 1e-9 * (1.0 + std::abs(prev)))
        throw std::logic_error("EM log-likelihood decreased");
    }
    fit.log_likelihood.push_back(ll);
    if (fit.log_likelihood.size() > 1 &&
        ll - fit.log_likelihood[fit.log_likelihood.size() - 2] < options.tol) {
      fit.converged = true;
      break;
    }

    m.initial = init_acc / init_acc.sum();
    for (int r = 0; r < n_roles; ++r) {
      const double row = xi_acc.row(r).sum();
      if (row > 0.0) m.transition.row(r) = xi_acc.row(r) / row;
      if (w_acc(r) > 0.0) m.means.row(r) = x_acc.row(r) / w_acc(r);
    }
    MatrixXd v_acc = MatrixXd::Zero(n_roles, dim);
    for (std::size_t i = 0; i < seqs.size(); ++i)
      for (int r = 0; r < n_roles; ++r)
        v_acc.row(r) += posts[i].gamma.col(r).transpose() *
                        (seqs[i].rowwise() - m.means.row(r)).array().square().matrix();
    for (int r = 0; r < n_roles; ++r) {
      if (w_acc(r) <= 0.0) continue;
      RowVectorXd var = v_acc.row(r) / w_acc(r);
      if ((var.array() <= RoleModel::kVarianceFloor).all()) {
        const std::string msg = "role " + std::to_string(r) +
                                " variance collapsed to the floor on every dim";
        if (std::find(fit.warnings.begin(), fit.warnings.end(), msg) ==
            fit.warnings.end()) {
          spdlog::warn("{}", msg);
          fit.warnings.push_back(msg);
        }
      }
      m.variances.row(r) = var.cwiseMax(RoleModel::kVarianceFloor);
    }
  }
  return fit;
}

std::vector<FeatureSequence> defender_features(const PlaySequence& seq,
                                               const FeatureOptions& options) {
  const auto defenders = seq.indices_of(AgentRole::kDefense);
  const int ball = options.ball_relative ? seq.ball_index() : -1;
  const Eigen::Index dim = options.ball_relative ? 6 : 4;
  std::vector<FeatureSequence> out;
  for (int a : defenders) {
    FeatureSequence f(static_cast<Eigen::Index>(seq.num_frames()), dim);
    for (std::size_t t = 0; t < seq.num_frames(); ++t) {
      const AgentState& s = seq.frames[t][a];
      f(t, 0) = s.position.x();
      f(t, 1) = s.position.y();
      f(t, 2) = s.velocity.x();
      f(t, 3) = s.velocity.y();
      if (ball >= 0) {
        const Vec2 rel = s.position - seq.frames[t][ball].position;
        f(t, 4) = rel.x();
        f(t, 5) = rel.y();
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

Eigen::MatrixXd role_cost(const std::vector<FeatureSequence>& player_features,
                          const RoleModel& model) {
  const auto k = static_cast<Eigen::Index>(player_features.size());
  MatrixXd cost = MatrixXd::Zero(k, model.n_roles);
  for (Eigen::Index p = 0; p < k; ++p)
    for (Eigen::Index t = 0; t < player_features[p].rows(); ++t)
      for (int r = 0; r < model.n_roles; ++r)
        cost(p, r) -= std::max(kLogDensityFloor,
                               model.log_density(r, player_features[p].row(t)));
  return cost;
}

std::vector<Eigen::MatrixXd> role_cost_per_step(
    const std::vector<FeatureSequence>& player_features, const RoleModel& model) {
  const auto k = static_cast<Eigen::Index>(player_features.size());
  const Eigen::Index T = k > 0 ? player_features.front().rows() : 0;
  std::vector<MatrixXd> out(static_cast<std::size_t>(T), MatrixXd(k, model.n_roles));
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index p = 0; p < k; ++p)
      for (int r = 0; r < model.n_roles; ++r)
        out[t](p, r) = -std::max(kLogDensityFloor,
                                 model.log_density(r, player_features[p].row(t)));
  return out;
}

namespace {

// Kuhn-Munkres with row/column potentials, O(n^3).
std::vector<int> hungarian(const MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

double matching_cost(const MatrixXd& cost, const std::vector<int>& row_to_col) {
  double total = 0.0;
  for (std::size_t i = 0; i < row_to_col.size(); ++i)
    total += cost(static_cast<Eigen::Index>(i), row_to_col[i]);
  return total;
}

double optimum(const MatrixXd& cost) {
  if (cost.rows() == 0) return 0.0;
  return matching_cost(cost, hungarian(cost));
}

}  // namespace

Assignment solve_assignment(const Eigen::MatrixXd& cost) {
  if (cost.rows() != cost.cols())
    throw std::invalid_argument("assignment cost matrix must be square");
  if (!cost.allFinite())
    throw std::invalid_argument("assignment costs must be finite");
  const int n = static_cast<int>(cost.rows());
  Assignment a;
  if (n == 0) return a;
  const double best = optimum(cost);
  const double tol = 1e-9 * std::max(1.0, std::abs(best));

  // Lexicographic tie-break: fix rows in order to the smallest column that
  // still admits an optimal completion.
  std::vector<int> fixed;
  std::vector<char> col_used(n, false);
  double fixed_cost = 0.0;
  for (int i = 0; i < n; ++i) {
    bool placed = false;
    for (int j = 0; j < n && !placed; ++j) {
      if (col_used[j]) continue;
      const int m = n - i - 1;
      MatrixXd sub(m, m);
      for (int r = 0, rr = 0; r < n; ++r) {
        if (r <= i) continue;
        for (int c = 0, cc = 0; c < n; ++c) {
          if (col_used[c] || c == j) continue;
          sub(rr, cc++) = cost(r, c);
        }
        ++rr;
      }
      const double total = fixed_cost + cost(i, j) + optimum(sub);
      if (total <= best + tol) {
        fixed.push_back(j);
        col_used[j] = true;
        fixed_cost += cost(i, j);
        placed = true;
      }
    }
    if (!placed) throw std::logic_error("assignment tie-break failed");
  }
  a.role_of = std::move(fixed);
  a.total = matching_cost(cost, a.role_of);
  return a;
}

namespace {

void check_bijection(const std::vector<int>& perm, std::size_t n) {
  if (perm.size() != n)
    throw std::invalid_argument("permutation size does not match defender count");
  std::vector<char> seen(n, false);
  for (int r : perm) {
    if (r < 0 || static_cast<std::size_t>(r) >= n || seen[r])
      throw std::invalid_argument("permutation is not a bijection");
    seen[r] = true;
  }
}

}  // namespace

PlaySequence reindex(const PlaySequence& seq, const std::vector<int>& role_of) {
  const auto defenders = seq.indices_of(AgentRole::kDefense);
  check_bijection(role_of, defenders.size());
  PlaySequence out = seq;
  for (std::size_t k = 0; k < defenders.size(); ++k) {
    const int src = defenders[k];
    const int dst = defenders[role_of[k]];
    out.agents[dst] = seq.agents[src];
    for (std::size_t t = 0; t < seq.frames.size(); ++t)
      out.frames[t][dst] = seq.frames[t][src];
  }
  out.role_permutation = role_of;
  return out;
}

PlaySequence undo_reindex(const PlaySequence& seq, const std::vector<int>& role_of) {
  const auto defenders = seq.indices_of(AgentRole::kDefense);
  check_bijection(role_of, defenders.size());
  std::vector<int> inverse(role_of.size());
  for (std::size_t k = 0; k < role_of.size(); ++k)
    inverse[role_of[k]] = static_cast<int>(k);
  PlaySequence out = reindex(seq, inverse);
  out.role_permutation.reset();
  return out;
}

PlaySequence assign_roles(const PlaySequence& seq, const RoleModel& model,
                          const RoleAssignmentOptions& options) {
  const auto features = defender_features(seq, options.features);
  if (static_cast<int>(features.size()) != model.n_roles)
    throw std::invalid_argument("role model size differs from defender count");
  if (options.mode == AssignmentMode::kPerSequence)
    return reindex(seq, solve_assignment(role_cost(features, model)).role_of);

  const auto costs = role_cost_per_step(features, model);
  const auto defenders = seq.indices_of(AgentRole::kDefense);
  PlaySequence out = seq;
  for (std::size_t t = 0; t < costs.size(); ++t) {
    const auto a = solve_assignment(costs[t]);
    for (std::size_t k = 0; k < defenders.size(); ++k)
      out.frames[t][defenders[a.role_of[k]]] = seq.frames[t][defenders[k]];
    if (t == 0) {
      for (std::size_t k = 0; k < defenders.size(); ++k)
        out.agents[defenders[a.role_of[k]]] = seq.agents[defenders[k]];
      out.role_permutation = a.role_of;
    }
  }
  if (out.num_frames() >= 3) rederive_kinematics(out);
  return out;
}

std::string role_model_json(const RoleModel& model) {
  auto rows = [](const MatrixXd& m) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) out[i].push_back(m(i, j));
    return out;
  };
  nlohmann::ordered_json j;
  j["version"] = RoleModel::kVersion;
  j["n_roles"] = model.n_roles;
  j["initial"] = std::vector<double>(model.initial.data(),
                                     model.initial.data() + model.initial.size());
  j["transition"] = rows(model.transition);
  j["means"] = rows(model.means);
  j["variances"] = rows(model.variances);
  return j.dump(1);
}

RoleModel role_model_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.at("version").get<int>() != RoleModel::kVersion)
    throw std::runtime_error("unsupported role model version");
  auto mat = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<std::vector<double>>>();
    MatrixXd m(static_cast<Eigen::Index>(v.size()),
               v.empty() ? 0 : static_cast<Eigen::Index>(v.front().size()));
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t k = 0; k < v[i].size(); ++k) m(i, k) = v[i][k];
    return m;
  };
  RoleModel m;
  m.n_roles = j.at("n_roles").get<int>();
  const auto init = j.at("initial").get<std::vector<double>>();
  m.initial = Eigen::Map<const VectorXd>(init.data(), static_cast<Eigen::Index>(init.size()));
  m.transition = mat(j.at("transition"));
  m.means = mat(j.at("means"));
  m.variances = mat(j.at("variances"));
  return m;
}

}  // namespace mapo
