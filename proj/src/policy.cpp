#include "mapo/policy.hpp"

#include "mapo/errors.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mapo {

using ad::Matrix;
using ad::RowVector;
using ad::Tape;
using ad::Var;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void PolicyConfig::validate() const {
  if (slots < 1 || embed_dim < 1 || hidden < 1 || gru_hidden < 1 || gru_layers < 1)
    throw ConfigError("policy dimensions must be positive");
  if (use_latent && latent < 1) throw ConfigError("latent dimension must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (!(std_floor > 0.0)) throw ConfigError("std floor must be positive");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (macro_weight < 0.0) throw ConfigError("macro weight must be non-negative");
  if (use_macro) grid.validate();
  constraints.validate();
}

int PolicyConfig::context_dim() const {
  return gru_hidden + obs_dim() + (use_macro ? grid.cells() : 0);
}

std::string PolicyConfig::variant_name() const {
  if (!use_latent) return "RNN-Gauss";
  std::string name = "VRNN";
  if (use_macro) name += "-macro";
  if (use_gate) name += "-Bi";
  const auto& c = constraints;
  if (c.use_pos && c.use_kl_acc && c.use_jerk && c.use_acc_recon) return name + "-Mech";
  std::string parts;
  if (c.use_pos) parts += "pos,";
  if (c.use_kl_acc) parts += "acc,";
  if (c.use_jerk) parts += "jrk,";
  if (!parts.empty()) name += "-C_" + parts.substr(0, parts.size() - 1);
  if (c.use_acc_recon) name += "-L_acc";
  return name;
}

ojson to_json(const PolicyConfig& c) {
  ojson j;
  j["slots"] = c.slots;
  j["embed_dim"] = c.embed_dim;
  j["hidden"] = c.hidden;
  j["latent"] = c.latent;
  j["gru_hidden"] = c.gru_hidden;
  j["gru_layers"] = c.gru_layers;
  j["batch_norm"] = c.batch_norm;
  j["dropout"] = c.dropout;
  j["std_floor"] = c.std_floor;
  j["use_latent"] = c.use_latent;
  j["use_gate"] = c.use_gate;
  j["use_macro"] = c.use_macro;
  j["grid"] = {{"rows", c.grid.rows}, {"cols", c.grid.cols},
               {"cell_w", c.grid.cell_w}, {"cell_h", c.grid.cell_h},
               {"x0", c.grid.x0}, {"y0", c.grid.y0}};
  j["labels"] = {{"speed_threshold", c.labels.speed_threshold},
                 {"min_hold", c.labels.min_hold}};
  j["macro_weight"] = c.macro_weight;
  j["temperature"] = c.temperature;
  j["dt"] = c.dt;
  const auto& k = c.constraints;
  j["constraints"] = {{"use_kl_acc", k.use_kl_acc}, {"use_pos", k.use_pos},
                      {"use_jerk", k.use_jerk},     {"use_acc_recon", k.use_acc_recon},
                      {"lambda_acc", k.lambda_acc}, {"lambda_pos", k.lambda_pos},
                      {"lambda_jrk", k.lambda_jrk}, {"lambda_rec", k.lambda_rec}};
  return j;
}

PolicyConfig policy_config_from_json(const json& j) {
  PolicyConfig c;
  c.slots = j.at("slots");
  c.embed_dim = j.at("embed_dim");
  c.hidden = j.at("hidden");
  c.latent = j.at("latent");
  c.gru_hidden = j.at("gru_hidden");
  c.gru_layers = j.at("gru_layers");
  c.batch_norm = j.at("batch_norm");
  c.dropout = j.at("dropout");
  c.std_floor = j.at("std_floor");
  c.use_latent = j.at("use_latent");
  c.use_gate = j.at("use_gate");
  c.use_macro = j.at("use_macro");
  const auto& g = j.at("grid");
  c.grid = {g.at("rows"), g.at("cols"), g.at("cell_w"), g.at("cell_h"), g.at("x0"),
            g.at("y0")};
  c.labels.speed_threshold = j.at("labels").at("speed_threshold");
  c.labels.min_hold = j.at("labels").at("min_hold");
  c.macro_weight = j.at("macro_weight");
  c.temperature = j.at("temperature");
  c.dt = j.at("dt");
  const auto& k = j.at("constraints");
  c.constraints.use_kl_acc = k.at("use_kl_acc");
  c.constraints.use_pos = k.at("use_pos");
  c.constraints.use_jerk = k.at("use_jerk");
  c.constraints.use_acc_recon = k.at("use_acc_recon");
  c.constraints.lambda_acc = k.at("lambda_acc");
  c.constraints.lambda_pos = k.at("lambda_pos");
  c.constraints.lambda_jrk = k.at("lambda_jrk");
  c.constraints.lambda_rec = k.at("lambda_rec");
  return c;
}

PreparedWindow prepare_window(const PlaySequence& seq, const GridSpec& grid,
                              const LabelOptions& labels) {
  seq.validate();
  PreparedWindow w;
  w.sequence_id = seq.sequence_id;
  w.dt = seq.dt();
  const auto k = static_cast<Eigen::Index>(seq.num_agents());
  w.state.resize(static_cast<Eigen::Index>(seq.num_frames()), k * kStateDim);
  for (std::size_t t = 0; t < seq.num_frames(); ++t)
    for (Eigen::Index a = 0; a < k; ++a) {
      const AgentState& s = seq.frames[t][a];
      w.state.block<1, kStateDim>(static_cast<Eigen::Index>(t), a * kStateDim)
          << s.position.x(), s.position.y(), s.velocity.x(), s.velocity.y(),
          s.acceleration.x(), s.acceleration.y();
    }
  w.goals = label_macro_goals(seq, grid, labels);
  return w;
}

FeatureScaling fit_scaling(std::span<const PreparedWindow> windows, int role) {
  FeatureScaling s;
  if (windows.empty()) return s;
  RowVector sum = RowVector::Zero(kStateDim), sq = RowVector::Zero(kStateDim);
  RowVector asq = RowVector::Zero(kActionDim);
  double n = 0.0, na = 0.0;
  for (const auto& w : windows) {
    for (Eigen::Index a = 0; a < w.slots(); ++a) {
      const Matrix block = w.state.middleCols(a * kStateDim, kStateDim);
      sum += block.colwise().sum();
      sq += block.cwiseAbs2().colwise().sum();
      n += static_cast<double>(block.rows());
    }
    asq += w.state.middleCols(role * kStateDim + 2, kActionDim).cwiseAbs2().colwise().sum();
    na += static_cast<double>(w.state.rows());
  }
  s.state_mean = sum / n;
  const RowVector var = (sq / n - s.state_mean.cwiseAbs2()).cwiseMax(0.0);
  for (int i = 0; i < kStateDim; ++i) s.state_std(i) = var(i) > 1e-12 ? std::sqrt(var(i)) : 1.0;
  // Root-mean-square so the decoder's zero output is a zero action.
  for (int i = 0; i < kActionDim; ++i)
    s.action_scale(i) = std::max(1e-3, std::sqrt(asq(i) / na));
  return s;
}

LossValues& LossValues::operator+=(const LossValues& o) {
  recon += o.recon;
  kl += o.kl;
  penalties.kl_acc += o.penalties.kl_acc;
  penalties.pos_nll += o.penalties.pos_nll;
  penalties.jerk += o.penalties.jerk;
  penalties.acc_recon += o.penalties.acc_recon;
  macro_ce += o.macro_ce;
  total += o.total;
  windows += o.windows;
  return *this;
}

double LossValues::decomposition_gap(double macro_weight) const {
  return total - (recon + kl + penalties.total() + macro_weight * macro_ce);
}

LossValues loss_values(const LossTerms& terms, long windows) {
  LossValues v;
  v.recon = terms.recon.scalar();
  v.kl = terms.kl.valid() ? terms.kl.scalar() : 0.0;
  auto pv = [&](PenaltyTerm t) {
    const Var& var = terms.penalty[static_cast<int>(t)];
    return var.valid() ? var.scalar() : 0.0;
  };
  v.penalties.kl_acc = pv(PenaltyTerm::kKlAcc);
  v.penalties.pos_nll = pv(PenaltyTerm::kPosNll);
  v.penalties.jerk = pv(PenaltyTerm::kJerk);
  v.penalties.acc_recon = pv(PenaltyTerm::kAccRecon);
  v.macro_ce = terms.macro_ce.valid() ? terms.macro_ce.scalar() : 0.0;
  v.total = terms.total.scalar();
  v.windows = windows;
  return v;
}

PolicyModel::PolicyModel(const PolicyConfig& config, int role, nn::Rng& rng)
    : config_(config), role_(role) {
  config.validate();
  if (role < 0 || role >= config.slots) throw std::invalid_argument("role out of range");
  const std::string p = "role" + std::to_string(role);
  ObservationConfig oc{config.slots, kStateDim, config.embed_dim, config.temperature};
  observation_ = ObservationNet(p + ".obs", oc, rng);
  if (config.use_macro) {
    MacroGoalConfig mc{config.grid.cells(), config.obs_dim(), config.hidden,
                       config.gru_hidden,   config.gru_layers, config.batch_norm,
                       config.dropout};
    macro_ = MacroGoalNet(p + ".macro", mc, rng);
  }
  const int ctx = config.context_dim();
  if (config.use_latent) {
    prior_ = nn::GaussianMlp(p + ".prior", ctx, config.hidden, config.latent,
                             config.batch_norm, config.dropout, kLatentStdFloor, rng);
    encoder_ = nn::GaussianMlp(p + ".enc", kActionDim + ctx, config.hidden, config.latent,
                               config.batch_norm, config.dropout, kLatentStdFloor, rng);
  }
  decoder_ = nn::GaussianMlp(p + ".dec", (config.use_latent ? config.latent : 0) + ctx,
                             config.hidden, kActionDim, config.batch_norm,
                             config.dropout, config.std_floor, rng);
  rnn_ = nn::StackedGru(p + ".rnn", kActionDim + (config.use_latent ? config.latent : 0),
                        config.gru_hidden, config.gru_layers, rng);
}

void PolicyModel::set_scaling(const FeatureScaling& s) {
  scaling_ = s;
  decoder_.set_output_scale(s.action_scale);
}

Matrix PolicyModel::normalize_state(const Matrix& raw) const {
  Matrix out(raw.rows(), raw.cols());
  const RowVector inv = scaling_.state_std.cwiseInverse();
  for (Eigen::Index a = 0; a < raw.cols() / kStateDim; ++a)
    out.middleCols(a * kStateDim, kStateDim) =
        (raw.middleCols(a * kStateDim, kStateDim).rowwise() - scaling_.state_mean)
            .array()
            .rowwise() *
        inv.array();
  return out;
}

Matrix PolicyModel::normalize_action(const Matrix& raw) const {
  return (raw.array().rowwise() / scaling_.action_scale.array()).matrix();
}

Var PolicyModel::context(Tape&, std::initializer_list<Var> parts) {
  std::vector<Var> used;
  for (const Var& v : parts)
    if (v.valid()) used.push_back(v);
  return used.size() == 1 ? used.front() : ad::concat_cols(used);
}

nn::GaussianOut PolicyModel::prior_step(Tape& tape, const Var& h_top, const Var& o,
                                        const Var& g, const nn::Context& ctx) {
  if (!config_.use_latent) throw std::logic_error("model has no latent");
  return prior_.forward(tape, context(tape, {h_top, o, g}), ctx);
}

nn::GaussianOut PolicyModel::posterior_step(Tape& tape, const Var& a_norm,
                                            const Var& h_top, const Var& o,
                                            const Var& g, const nn::Context& ctx) {
  if (!config_.use_latent) throw std::logic_error("model has no latent");
  return encoder_.forward(tape, context(tape, {a_norm, h_top, o, g}), ctx);
}

nn::GaussianOut PolicyModel::decode_action(Tape& tape, const Var& z, const Var& h_top,
                                           const Var& o, const Var& g,
                                           const nn::Context& ctx) {
  const Var zin = config_.use_latent ? z : Var();
  return decoder_.forward(tape, context(tape, {zin, h_top, o, g}), ctx);
}

std::vector<Var> PolicyModel::recurrence(Tape& tape, const Var& a_norm, const Var& z,
                                         const std::vector<Var>& h) {
  const Var zin = config_.use_latent ? z : Var();
  return rnn_.forward(tape, context(tape, {a_norm, zin}), h);
}

Var PolicyModel::observe(Tape& tape, const Var& b, const Var& state_norm) {
  return observation_.observe(tape, b, state_norm);
}

namespace {

Matrix normal_matrix(Eigen::Index r, Eigen::Index c, nn::Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

Var sum_all(const std::vector<Var>& parts) {
  Var acc = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) acc = ad::add(acc, parts[i]);
  return acc;
}

}  // namespace

LossTerms PolicyModel::sequence_loss(Tape& tape,
                                     std::span<const PreparedWindow* const> windows,
                                     const nn::Context& ctx, nn::Rng& noise) {
  if (windows.empty()) throw std::invalid_argument("empty batch");
  const int frames = windows.front()->frames();
  for (const auto* w : windows) {
    if (w->frames() != frames) throw std::invalid_argument("windows differ in length");
    if (w->slots() != config_.slots) throw std::invalid_argument("slot count mismatch");
  }
  if (frames < 3) throw std::invalid_argument("windows need at least 3 frames");
  const auto batch = static_cast<Eigen::Index>(windows.size());
  const double dt = config_.dt;
  const Eigen::Index self = static_cast<Eigen::Index>(role_) * kStateDim;

  std::vector<Matrix> state(frames, Matrix(batch, config_.slots * kStateDim));
  for (int t = 0; t < frames; ++t)
    for (Eigen::Index b = 0; b < batch; ++b) state[t].row(b) = windows[b]->state.row(t);
  auto action = [&](int t) -> Matrix { return state[t].middleCols(self + 2, kActionDim); };
  auto position = [&](int t) -> Matrix { return state[t].middleCols(self, 2); };

  std::vector<Var> h;
  for (auto& m : rnn_.zero_state(batch)) h.push_back(tape.constant(m));
  std::vector<Var> hg;
  if (config_.use_macro)
    for (auto& m : macro_.zero_state(batch)) hg.push_back(tape.constant(m));

  const auto& cc = config_.constraints;
  std::vector<Var> recon, kl, ce;
  std::array<std::vector<Var>, 4> pen;
  Var prev_mu_vel, prev_std_vel;
  const bool hard = ctx.mode == nn::Mode::kEval;
  const Matrix ones = Matrix::Ones(batch, config_.slots);

  for (int t = 1; t < frames; ++t) {
    const Var s = tape.constant(normalize_state(state[t - 1]));
    Var b;
    if (config_.use_gate) {
      auto [e1, e2] = observation_.draw_noise(batch, noise);
      b = observation_.gate(tape, s, hard ? GateMode::kHard : GateMode::kRelaxed, e1, e2);
    } else {
      b = tape.constant(ones);
    }
    const Var o = observe(tape, b, s);

    Var g;
    if (config_.use_macro) {
      std::vector<int> labels(static_cast<std::size_t>(batch));
      for (Eigen::Index i = 0; i < batch; ++i) labels[i] = windows[i]->goals[role_][t];
      ce.push_back(ad::cross_entropy(macro_.logits(tape, hg, o, ctx), labels));
      g = tape.constant(one_hot(labels, config_.grid.cells()));
      hg = macro_.update(tape, g, o, hg);
    }

    const Matrix a_raw = action(t);
    const Var a_norm = tape.constant(normalize_action(a_raw));
    Var z;
    if (config_.use_latent) {
      const auto p = prior_step(tape, h.back(), o, g, ctx);
      const auto q = posterior_step(tape, a_norm, h.back(), o, g, ctx);
      z = ad::add(q.mean, ad::mul(q.std, tape.constant(
                                             normal_matrix(batch, config_.latent, noise))));
      kl.push_back(ad::gaussian_kl(q.mean, q.std, p.mean, ad::square(p.std)));
    }
    const auto dec = decode_action(tape, z, h.back(), o, g, ctx);
    recon.push_back(ad::gaussian_nll(a_raw, dec.mean, dec.std));

    const Var mu_vel = ad::slice_cols(dec.mean, 0, 2);
    const Var sd_vel = ad::slice_cols(dec.std, 0, 2);
    const Var mu_acc = ad::slice_cols(dec.mean, 2, 2);
    const Var sd_acc = ad::slice_cols(dec.std, 2, 2);
    if (cc.use_acc_recon)
      pen[3].push_back(ad::gaussian_nll(a_raw.rightCols(2), mu_acc, sd_acc));
    if (t >= 2) {
      if (cc.use_kl_acc)
        pen[0].push_back(ad::kl_acc_penalty(mu_acc, sd_acc, mu_vel, sd_vel, prev_mu_vel,
                                            prev_std_vel, dt));
      if (cc.use_pos)
        pen[1].push_back(
            ad::pos_nll_penalty(position(t), position(t - 1), mu_vel, sd_vel, dt));
      if (cc.use_jerk && t + 1 < frames)
        pen[2].push_back(ad::gaussian_nll(action(t + 1).rightCols(2), mu_acc, sd_acc));
    }
    prev_mu_vel = mu_vel;
    prev_std_vel = sd_vel;
    h = recurrence(tape, a_norm, z, h);
  }

  LossTerms out;
  out.recon = sum_all(recon);
  std::vector<Var> parts{out.recon};
  if (config_.use_latent) {
    out.kl = sum_all(kl);
    parts.push_back(out.kl);
  }
  const double weights[4] = {cc.lambda_acc, cc.lambda_pos, cc.lambda_jrk, cc.lambda_rec};
  for (int i = 0; i < 4; ++i) {
    if (!cc.enabled(kAllPenaltyTerms[i]) || pen[i].empty()) continue;
    out.penalty[i] = ad::scale(sum_all(pen[i]), weights[i]);
    parts.push_back(out.penalty[i]);
  }
  if (config_.use_macro) {
    out.macro_ce = sum_all(ce);
    parts.push_back(ad::scale(out.macro_ce, config_.macro_weight));
  }
  out.total = sum_all(parts);
  return out;
}

std::vector<ad::Parameter*> PolicyModel::parameters() {
  std::vector<ad::Parameter*> out;
  if (config_.use_gate) {
    observation_.collect(out);
  } else {
    out.push_back(&observation_.embed_weight());
    out.push_back(&observation_.embed_bias());
  }
  if (config_.use_macro) macro_.collect(out);
  if (config_.use_latent) {
    prior_.collect(out);
    encoder_.collect(out);
  }
  decoder_.collect(out);
  rnn_.collect(out);
  return out;
}

std::vector<nn::Buffer> PolicyModel::buffers() {
  std::vector<nn::Buffer> out;
  if (config_.use_macro) macro_.collect_buffers(out);
  if (config_.use_latent) {
    prior_.collect_buffers(out);
    encoder_.collect_buffers(out);
  }
  decoder_.collect_buffers(out);
  return out;
}

std::size_t PolicyModel::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += static_cast<std::size_t>(p->size());
  return n;
}

namespace {

ojson matrix_json(const Matrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j) {
  const auto data = j.at("data").get<std::vector<double>>();
  const Eigen::Index r = j.at("rows"), c = j.at("cols");
  if (static_cast<Eigen::Index>(data.size()) != r * c)
    throw SchemaError("checkpoint matrix has wrong element count");
  return Eigen::Map<const Matrix>(data.data(), r, c);
}

ojson row_json(const RowVector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

RowVector row_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const RowVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

ojson checkpoint_json(PolicyModel& model, const CheckpointMeta& meta) {
  ojson j;
  j["format"] = "mapo-policy";
  j["version"] = PolicyModel::kCheckpointVersion;
  j["role"] = model.role();
  j["variant"] = model.config().variant_name();
  j["config"] = to_json(model.config());
  j["scaling"] = {{"state_mean", row_json(model.scaling().state_mean)},
                  {"state_std", row_json(model.scaling().state_std)},
                  {"action_scale", row_json(model.scaling().action_scale)}};
  ojson params = ojson::object(), moments = ojson::object();
  for (auto* p : model.parameters()) {
    params[p->name] = matrix_json(p->value);
    if (p->adam_m.size() == p->value.size())
      moments[p->name] = {{"m", matrix_json(p->adam_m)}, {"v", matrix_json(p->adam_v)}};
  }
  j["parameters"] = std::move(params);
  ojson bufs = ojson::object();
  for (const auto& b : model.buffers()) bufs[b.name] = matrix_json(*b.value);
  j["buffers"] = std::move(bufs);
  j["optimizer"] = {{"step", meta.optimizer_step}, {"moments", std::move(moments)}};
  j["rng"] = meta.rng_state;
  j["epoch"] = meta.epoch;
  j["val_score"] = meta.val_score;
  j["train_config"] = meta.train_config;
  return j;
}

void save_checkpoint(const std::string& path, PolicyModel& model,
                     const CheckpointMeta& meta) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << checkpoint_json(model, meta).dump() << '\n';
}

LoadedCheckpoint checkpoint_from_json(const json& j) {
  if (j.value("format", "") != "mapo-policy") throw SchemaError("not a policy checkpoint");
  if (j.at("version").get<int>() != PolicyModel::kCheckpointVersion)
    throw SchemaError("unsupported checkpoint version");
  const PolicyConfig cfg = policy_config_from_json(j.at("config"));
  nn::Rng init(0);
  LoadedCheckpoint out;
  out.model = std::make_unique<PolicyModel>(cfg, j.at("role").get<int>(), init);
  FeatureScaling s;
  s.state_mean = row_from_json(j.at("scaling").at("state_mean"));
  s.state_std = row_from_json(j.at("scaling").at("state_std"));
  s.action_scale = row_from_json(j.at("scaling").at("action_scale"));
  out.model->set_scaling(s);
  const auto& params = j.at("parameters");
  const auto& moments = j.at("optimizer").at("moments");
  for (auto* p : out.model->parameters()) {
    if (!params.contains(p->name)) throw SchemaError("checkpoint lacks " + p->name);
    Matrix v = matrix_from_json(params.at(p->name));
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
      throw SchemaError("checkpoint shape mismatch for " + p->name);
    p->value = std::move(v);
    if (moments.contains(p->name)) {
      p->adam_m = matrix_from_json(moments.at(p->name).at("m"));
      p->adam_v = matrix_from_json(moments.at(p->name).at("v"));
    }
  }
  for (auto& b : out.model->buffers()) *b.value = matrix_from_json(j.at("buffers").at(b.name));
  out.meta.epoch = j.at("epoch");
  out.meta.optimizer_step = j.at("optimizer").at("step");
  out.meta.val_score = j.at("val_score").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                   : j.at("val_score").get<double>();
  out.meta.rng_state = j.at("rng");
  out.meta.train_config = j.at("train_config");
  return out;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return checkpoint_from_json(json::parse(in));
}

}  // namespace mapo
