#include "mapo/training.hpp"

#include "mapo/errors.hpp"
#include "mapo/evaluation.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace mapo {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
  if (role < 0 || role >= policy.slots) throw ConfigError("role out of range");
  if (burn_in < 1 || horizon < 1 || val_samples < 1)
    throw ConfigError("burn_in, horizon and val_samples must be positive");
  policy.validate();
}

namespace {

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

int parse_int(const std::string& v) {
  std::size_t used = 0;
  int x = 0;
  try {
    x = std::stoi(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected an integer, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return x;
}

double parse_double(const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError("expected a number, got '" + v + "'");
  return x;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Keys that reset others are applied first so the file order does not matter.
int key_rank(const std::string& key) {
  if (key == "sport") return 0;
  if (key == "preset") return 1;
  return 2;
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

}  // namespace

void set_config_value(TrainConfig& c, const std::string& key, const std::string& v) {
  auto& p = c.policy;
  auto& k = p.constraints;
  if (key == "epochs") c.epochs = parse_int(v);
  else if (key == "batch_size") c.batch_size = parse_int(v);
  else if (key == "learning_rate") c.learning_rate = parse_double(v);
  else if (key == "clip_norm") c.clip_norm = parse_double(v);
  else if (key == "seed") {
    try {
      c.seed = std::stoull(v);
    } catch (const std::exception&) {
      throw ConfigError("expected an unsigned integer, got '" + v + "'");
    }
  } else if (key == "role") c.role = parse_int(v);
  else if (key == "sport") {
    try {
      c.sport = parse_sport(v);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    p.grid = default_grid(c.sport);
    k = ConstraintConfig::preset(c.preset, c.sport);
  } else if (key == "preset") {
    try {
      c.preset = parse_preset(v);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    k = ConstraintConfig::preset(c.preset, c.sport);
  } else if (key == "variant") {
    if (v == "vrnn") p.use_latent = true;
    else if (v == "rnn_gauss") p.use_latent = false;
    else throw ConfigError("variant must be vrnn or rnn_gauss");
  } else if (key == "gate") p.use_gate = parse_bool(v);
  else if (key == "macro") p.use_macro = parse_bool(v);
  else if (key == "slots") p.slots = parse_int(v);
  else if (key == "embed_dim") p.embed_dim = parse_int(v);
  else if (key == "hidden") p.hidden = parse_int(v);
  else if (key == "latent") p.latent = parse_int(v);
  else if (key == "gru_hidden") p.gru_hidden = parse_int(v);
  else if (key == "gru_layers") p.gru_layers = parse_int(v);
  else if (key == "batch_norm") p.batch_norm = parse_bool(v);
  else if (key == "dropout") p.dropout = parse_double(v);
  else if (key == "std_floor") p.std_floor = parse_double(v);
  else if (key == "temperature") p.temperature = parse_double(v);
  else if (key == "macro_weight") p.macro_weight = parse_double(v);
  else if (key == "speed_threshold") p.labels.speed_threshold = parse_double(v);
  else if (key == "min_hold") p.labels.min_hold = parse_double(v);
  else if (key == "dt") p.dt = parse_double(v);
  else if (key == "lambda_acc") k.lambda_acc = parse_double(v);
  else if (key == "lambda_pos") k.lambda_pos = parse_double(v);
  else if (key == "lambda_jrk") k.lambda_jrk = parse_double(v);
  else if (key == "lambda_rec") k.lambda_rec = parse_double(v);
  else if (key == "metric") {
    if (v == "position_l2") c.metric = SelectionMetric::kPositionL2;
    else if (v == "loss") c.metric = SelectionMetric::kLoss;
    else throw ConfigError("metric must be position_l2 or loss");
  } else if (key == "burn_in") c.burn_in = parse_int(v);
  else if (key == "horizon") c.horizon = parse_int(v);
  else if (key == "val_samples") c.val_samples = parse_int(v);
  else if (key == "out_dir") c.out_dir = v;
  else throw ConfigError("unknown key '" + key + "'");
}

TrainConfig parse_train_config(std::istream& in) {
  struct Entry {
    std::string key, value;
    long line;
  };
  std::vector<Entry> entries;
  std::string raw;
  long line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError(fmt::format("line {}: expected key = value", line));
    entries.push_back({trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line});
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return key_rank(a.key) < key_rank(b.key);
  });
  TrainConfig cfg;
  for (const auto& e : entries) {
    try {
      set_config_value(cfg, e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError(fmt::format("line {}: {}", e.line, err.what()));
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return parse_train_config(in);
}

std::string config_text(const TrainConfig& c) {
  const auto& p = c.policy;
  const auto& k = p.constraints;
  std::string s;
  auto put = [&](const char* key, const std::string& v) { s += fmt::format("{} = {}\n", key, v); };
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  put("sport", std::string(to_string(c.sport)));
  put("preset", std::string(to_string(c.preset)));
  put("epochs", std::to_string(c.epochs));
  put("batch_size", std::to_string(c.batch_size));
  put("learning_rate", fmt_double(c.learning_rate));
  put("clip_norm", fmt_double(c.clip_norm));
  put("seed", std::to_string(c.seed));
  put("role", std::to_string(c.role));
  put("variant", p.use_latent ? "vrnn" : "rnn_gauss");
  put("gate", b(p.use_gate));
  put("macro", b(p.use_macro));
  put("slots", std::to_string(p.slots));
  put("embed_dim", std::to_string(p.embed_dim));
  put("hidden", std::to_string(p.hidden));
  put("latent", std::to_string(p.latent));
  put("gru_hidden", std::to_string(p.gru_hidden));
  put("gru_layers", std::to_string(p.gru_layers));
  put("batch_norm", b(p.batch_norm));
  put("dropout", fmt_double(p.dropout));
  put("std_floor", fmt_double(p.std_floor));
  put("temperature", fmt_double(p.temperature));
  put("macro_weight", fmt_double(p.macro_weight));
  put("speed_threshold", fmt_double(p.labels.speed_threshold));
  put("min_hold", fmt_double(p.labels.min_hold));
  put("dt", fmt_double(p.dt));
  put("lambda_acc", fmt_double(k.lambda_acc));
  put("lambda_pos", fmt_double(k.lambda_pos));
  put("lambda_jrk", fmt_double(k.lambda_jrk));
  put("lambda_rec", fmt_double(k.lambda_rec));
  put("metric", c.metric == SelectionMetric::kPositionL2 ? "position_l2" : "loss");
  put("burn_in", std::to_string(c.burn_in));
  put("horizon", std::to_string(c.horizon));
  put("val_samples", std::to_string(c.val_samples));
  if (!c.out_dir.empty()) put("out_dir", c.out_dir);
  return s;
}

nlohmann::ordered_json config_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  std::istringstream in(config_text(c));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

LossValues evaluate_loss(PolicyModel& model, std::span<const PreparedWindow> windows,
                         int batch_size, std::uint64_t seed) {
  LossValues total;
  nn::Rng noise(seed);
  const nn::Context ctx{nn::Mode::kEval, nullptr, false};
  for (std::size_t i = 0; i < windows.size(); i += static_cast<std::size_t>(batch_size)) {
    std::vector<const PreparedWindow*> batch;
    for (std::size_t j = i; j < std::min(windows.size(), i + batch_size); ++j)
      batch.push_back(&windows[j]);
    ad::Tape tape(true);
    total += loss_values(model.sequence_loss(tape, batch, ctx, noise),
                         static_cast<long>(batch.size()));
  }
  return total;
}

double validation_position_l2(PolicyModel& model, std::span<const PreparedWindow> windows,
                              int burn_in, int horizon, int samples, std::uint64_t seed) {
  if (windows.empty()) throw std::invalid_argument("no validation windows");
  RolloutOptions opts;
  opts.burn_in = burn_in;
  opts.horizon = horizon;
  opts.samples = samples;
  opts.log_gates = false;
  nn::Rng rng(seed);
  PolicyModel* models[] = {&model};
  const auto results = rollout(models, windows, opts, rng);
  const int roles[] = {model.role()};
  double sum = 0.0;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto truth = ground_truth_states(windows[w], roles, burn_in + horizon);
    sum += l2_metrics(results[w].samples, truth, burn_in, burn_in + horizon).best[0];
  }
  return sum / static_cast<double>(windows.size());
}

std::size_t select_best(std::span<const ScoredCheckpoint> checkpoints) {
  if (checkpoints.empty()) throw std::invalid_argument("no checkpoints to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < checkpoints.size(); ++i) {
    const auto& c = checkpoints[i];
    const auto& b = checkpoints[best];
    if (c.val_score < b.val_score || (c.val_score == b.val_score && c.epoch < b.epoch))
      best = i;
  }
  return best;
}

std::size_t select_best(std::span<const std::string> paths,
                        std::span<const PreparedWindow> val, const TrainConfig& config) {
  std::vector<ScoredCheckpoint> scored;
  for (const auto& p : paths) {
    auto loaded = load_checkpoint(p);
    ScoredCheckpoint s;
    s.epoch = loaded.meta.epoch;
    s.path = p;
    if (config.metric == SelectionMetric::kPositionL2) {
      s.val_score = validation_position_l2(*loaded.model, val, config.burn_in,
                                           config.horizon, config.val_samples, config.seed);
    } else {
      const auto v = evaluate_loss(*loaded.model, val, config.batch_size, config.seed);
      s.val_score = v.total / static_cast<double>(std::max(1L, v.windows));
    }
    scored.push_back(std::move(s));
  }
  return select_best(scored);
}

void write_metrics_header(std::ostream& out) { out << "epoch,split,term,value\n"; }

void write_metrics_rows(std::ostream& out, const EpochRecord& rec, const PolicyConfig& cfg,
                        bool has_val) {
  auto rows = [&](const char* split, const LossValues& v) {
    const double n = static_cast<double>(std::max(1L, v.windows));
    auto put = [&](std::string_view term, double value) {
      out << rec.epoch << ',' << split << ',' << term << ',' << fmt::format("{}", value / n)
          << '\n';
    };
    put("total", v.total);
    put("recon", v.recon);
    if (cfg.use_latent) put("kl", v.kl);
    for (auto t : cfg.constraints.enabled_terms()) put(to_string(t), v.penalties.get(t));
    if (cfg.use_macro) put("macro_ce", v.macro_ce);
  };
  rows("train", rec.train);
  if (has_val) rows("val", rec.val);
  out << rec.epoch << ",val,score," << fmt::format("{}", rec.val_score) << '\n';
}

namespace {

void dump_batch(const TrainConfig& config, int epoch, long step,
                const std::vector<const PreparedWindow*>& batch, const LossValues& v,
                std::string& where) {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["step"] = step;
  j["role"] = config.role;
  std::vector<std::string> ids;
  for (const auto* w : batch) ids.push_back(w->sequence_id);
  j["windows"] = ids;
  j["recon"] = v.recon;
  j["kl"] = v.kl;
  j["kl_acc"] = v.penalties.kl_acc;
  j["pos_nll"] = v.penalties.pos_nll;
  j["jerk"] = v.penalties.jerk;
  j["acc_recon"] = v.penalties.acc_recon;
  j["macro_ce"] = v.macro_ce;
  j["total"] = v.total;
  if (config.out_dir.empty()) {
    where = "log";
    spdlog::error("non-finite batch: {}", j.dump());
    return;
  }
  where = (fs::path(config.out_dir) / "nonfinite_batch.json").string();
  std::ofstream(where) << j.dump(1) << '\n';
}

}  // namespace

TrainResult train_policy(const TrainConfig& config, std::span<const PreparedWindow> train,
                         std::span<const PreparedWindow> val) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("no training windows");
  std::seed_seq seq{config.seed, static_cast<std::uint64_t>(config.role)};
  nn::Rng rng(seq);

  TrainResult result;
  result.model = std::make_unique<PolicyModel>(config.policy, config.role, rng);
  PolicyModel& model = *result.model;
  model.set_scaling(fit_scaling(train, config.role));
  const auto params = model.parameters();
  const nn::AdamConfig adam{config.learning_rate};
  const double mw = config.policy.macro_weight;

  std::ofstream metrics;
  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    result.metrics_path = (fs::path(config.out_dir) / "metrics.csv").string();
    metrics.open(result.metrics_path);
    if (!metrics) throw std::runtime_error("cannot write " + result.metrics_path);
    write_metrics_header(metrics);
    std::ofstream(fs::path(config.out_dir) / "config.txt") << config_text(config);
  }
  const auto echo = config_json(config);

  std::vector<std::size_t> order(train.size());
  long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(config.batch_size)) {
      std::vector<const PreparedWindow*> batch;
      for (std::size_t j = i; j < std::min(order.size(), i + config.batch_size); ++j)
        batch.push_back(&train[order[j]]);
      ad::Tape tape;
      const nn::Context ctx{nn::Mode::kTrain, &rng, true};
      const LossTerms terms = model.sequence_loss(tape, batch, ctx, rng);
      const LossValues v = loss_values(terms, static_cast<long>(batch.size()));
      ++step;
      if (!std::isfinite(v.total)) {
        std::string where;
        dump_batch(config, epoch, step, batch, v, where);
        throw TrainingError(fmt::format("non-finite loss at epoch {} step {} (role {}); batch dumped to {}",
                                        epoch, step, config.role, where));
      }
      const double gap = v.decomposition_gap(mw);
      if (std::abs(gap) > 1e-6 * std::max(1.0, std::abs(v.total)))
        throw TrainingError(fmt::format("loss decomposition off by {} at step {}", gap, step));
      tape.backward(ad::scale(terms.total, 1.0 / static_cast<double>(batch.size())));
      const double norm = nn::clip_grad_norm(params, config.clip_norm);
      if (!std::isfinite(norm)) {
        std::string where;
        dump_batch(config, epoch, step, batch, v, where);
        throw TrainingError(fmt::format("non-finite gradient at epoch {} step {}; batch dumped to {}",
                                        epoch, step, where));
      }
      nn::adam_step(params, adam, step);
      nn::zero_grad(params);
      rec.train += v;
    }

    const bool has_val = !val.empty();
    const std::span<const PreparedWindow> score_set = has_val ? val : train;
    if (has_val) rec.val = evaluate_loss(model, val, config.batch_size, config.seed);
    if (config.metric == SelectionMetric::kPositionL2) {
      rec.val_score = validation_position_l2(model, score_set, config.burn_in, config.horizon,
                                             config.val_samples, config.seed);
    } else {
      const LossValues& v = has_val ? rec.val : rec.train;
      rec.val_score = v.total / static_cast<double>(std::max(1L, v.windows));
    }
    if (metrics) {
      write_metrics_rows(metrics, rec, config.policy, has_val);
      metrics.flush();
    }
    spdlog::debug("role {} epoch {} train {:.4f} score {:.4f}", config.role, epoch,
                  rec.train.total / static_cast<double>(rec.train.windows), rec.val_score);

    CheckpointMeta meta;
    meta.epoch = epoch;
    meta.optimizer_step = step;
    meta.val_score = rec.val_score;
    std::ostringstream rs;
    rs << rng;
    meta.rng_state = rs.str();
    meta.train_config = echo;
    ScoredCheckpoint cp;
    cp.epoch = epoch;
    cp.val_score = rec.val_score;
    cp.checkpoint = checkpoint_json(model, meta);
    if (!config.out_dir.empty()) {
      cp.path = (fs::path(config.out_dir) / fmt::format("checkpoint_epoch{:03d}.json", epoch)).string();
      std::ofstream(cp.path) << cp.checkpoint.dump() << '\n';
    }
    result.checkpoints.push_back(std::move(cp));
    result.history.push_back(rec);
  }
  result.best = select_best(result.checkpoints);
  return result;
}

}  // namespace mapo
