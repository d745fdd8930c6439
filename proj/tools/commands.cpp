#include "commands.hpp"

#include "svg.hpp"

#include "mapo/errors.hpp"
#include "mapo/evaluation.hpp"
#include "mapo/role_assignment.hpp"
#include "mapo/rollout.hpp"
#include "mapo/synthetic.hpp"
#include "mapo/training.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace mapo::cli {

namespace {

using json = nlohmann::ordered_json;

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw MissingInput(fmt::format("no {} given", what));
  if (!fs::is_regular_file(path)) throw MissingInput(fmt::format("{} '{}' not found", what, path));
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

json split_counts(const Dataset& d) {
  return {{"train", d.train.size()}, {"val", d.val.size()}, {"test", d.test.size()}};
}

std::vector<PlaySequence> all_sequences(const Dataset& d) {
  std::vector<PlaySequence> out;
  for (auto* s : d.all()) out.push_back(*s);
  return out;
}

struct LoadedModels {
  std::vector<std::unique_ptr<PolicyModel>> owned;
  std::vector<PolicyModel*> ptrs;
  std::vector<std::string> paths;
};

LoadedModels load_models(const std::vector<std::string>& paths) {
  LoadedModels m;
  for (const auto& p : paths) {
    require_file(p, "model checkpoint");
    auto ck = load_checkpoint(p);
    m.ptrs.push_back(ck.model.get());
    m.owned.push_back(std::move(ck.model));
    m.paths.push_back(p);
  }
  std::sort(m.ptrs.begin(), m.ptrs.end(),
            [](const PolicyModel* a, const PolicyModel* b) { return a->role() < b->role(); });
  return m;
}

std::vector<PreparedWindow> load_windows(const std::string& data, const std::string& split,
                                         const GridSpec& grid, const LabelOptions& labels,
                                         int max_windows) {
  require_file(data, "tracking file");
  const auto ingested = ingest_tracking(data);
  const auto& seqs = ingested.dataset.split(parse_split(split));
  std::vector<PreparedWindow> out;
  for (const auto& s : seqs) {
    if (max_windows > 0 && static_cast<int>(out.size()) >= max_windows) break;
    out.push_back(prepare_window(s, grid, labels));
  }
  if (out.empty()) throw MissingInput(fmt::format("no {} sequences in '{}'", split, data));
  return out;
}

void write_states(std::ostream& out, const std::string& id, int sample,
                  const std::vector<std::vector<AgentState>>& traj,
                  const std::vector<int>& roles) {
  for (std::size_t t = 0; t < traj.size(); ++t)
    for (std::size_t j = 0; j < roles.size(); ++j) {
      const AgentState& s = traj[t][j];
      out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", id, sample, t, roles[j],
                         s.position.x(), s.position.y(), s.velocity.x(), s.velocity.y(),
                         s.acceleration.x(), s.acceleration.y());
    }
}

constexpr const char* kStateHeader = "sequence_id,sample,t,role,x,y,vx,vy,ax,ay\n";

/// rollouts.csv, truth.csv, gates.csv, goals.csv in `dir` with `prefix`.
std::vector<std::string> write_rollouts(const std::string& dir, const std::string& prefix,
                                        std::span<const RolloutResult> results,
                                        std::span<const PreparedWindow> windows, int frames,
                                        bool gates, bool goals) {
  std::vector<std::string> paths;
  const std::string rp = join(dir, prefix + "rollouts.csv");
  auto ro = open_out(rp);
  ro << kStateHeader;
  for (const auto& r : results)
    for (std::size_t n = 0; n < r.samples.size(); ++n)
      write_states(ro, r.sequence_id, static_cast<int>(n), r.samples[n], r.roles);
  paths.push_back(rp);

  const std::string tp = join(dir, prefix + "truth.csv");
  auto tr = open_out(tp);
  tr << kStateHeader;
  for (std::size_t w = 0; w < results.size(); ++w)
    write_states(tr, results[w].sequence_id, 0,
                 ground_truth_states(windows[w], results[w].roles, frames), results[w].roles);
  paths.push_back(tp);

  if (gates) {
    const std::string gp = join(dir, prefix + "gates.csv");
    auto go = open_out(gp);
    const int k = windows.front().slots();
    go << "sequence_id,sample,t,role";
    for (int i = 0; i < k; ++i) go << ",b" << i;
    go << '\n';
    for (const auto& r : results)
      for (const auto& e : r.gates) {
        go << r.sequence_id << ',' << e.sample << ',' << e.t << ',' << e.role;
        for (Eigen::Index i = 0; i < e.b.size(); ++i) go << ',' << e.b(i);
        go << '\n';
      }
    paths.push_back(gp);
  }
  if (goals) {
    const std::string mp = join(dir, prefix + "goals.csv");
    auto mo = open_out(mp);
    mo << "sequence_id,sample,t,role,cell\n";
    for (const auto& r : results)
      for (const auto& e : r.goals)
        mo << fmt::format("{},{},{},{},{}\n", r.sequence_id, e.sample, e.t, e.role, e.cell);
    paths.push_back(mp);
  }
  return paths;
}

json rollout_options_json(const cli::RolloutOptions& o) {
  return {{"model", o.models},     {"data", o.data},         {"split", o.split},
          {"n", o.samples},        {"burn_in", o.burn_in},   {"horizon", o.horizon},
          {"seed", o.seed},        {"max_windows", o.max_windows}, {"roles", o.roles}};
}

mapo::RolloutOptions to_rollout(const cli::RolloutOptions& o) {
  mapo::RolloutOptions r;
  r.burn_in = o.burn_in;
  r.horizon = o.horizon;
  r.samples = o.samples;
  return r;
}

bool any_gate(const LoadedModels& m) {
  return std::any_of(m.ptrs.begin(), m.ptrs.end(),
                     [](const PolicyModel* p) { return p->config().use_gate; });
}

bool any_macro(const LoadedModels& m) {
  return std::any_of(m.ptrs.begin(), m.ptrs.end(),
                     [](const PolicyModel* p) { return p->config().use_macro; });
}

std::vector<RolloutResult> run_models(const LoadedModels& models,
                                      std::span<const PreparedWindow> windows,
                                      const mapo::RolloutOptions& opts, std::uint64_t seed) {
  nn::Rng rng(seed);
  return rollout(models.ptrs, windows, opts, rng);
}

GateOverride read_custom_override(const std::string& path, int slots) {
  require_file(path, "gate file");
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  const bool logged = header.rfind("sample,t,role", 0) == 0;
  const bool combined = header.rfind("sequence_id,sample,t,role", 0) == 0;
  if (logged || combined) {
    // A recorded gate log: sample 0 of the first sequence becomes the
    // per-step schedule.
    std::stringstream body;
    body << "sample,t,role\n";
    std::string first;
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      if (combined) {
        const auto comma = line.find(',');
        const std::string id = line.substr(0, comma);
        if (first.empty()) first = id;
        if (id != first) continue;
        line = line.substr(comma + 1);
      }
      body << line << '\n';
    }
    const GateLog log = read_gate_log(body);
    int t_max = -1, r_max = -1;
    for (const auto& e : log) {
      t_max = std::max(t_max, e.t);
      r_max = std::max(r_max, e.role);
    }
    std::vector<Eigen::MatrixXd> sched(static_cast<std::size_t>(t_max + 1));
    for (const auto& e : log) {
      if (e.sample != 0) continue;
      if (e.b.size() != slots) throw std::invalid_argument("gate file width does not match slots");
      auto& m = sched[e.t];
      if (m.size() == 0) m = Eigen::MatrixXd::Zero(r_max + 1, slots);
      m.row(e.role) = e.b;
    }
    auto o = GateOverride::schedule(std::move(sched));
    o.check_slots(slots);
    return o;
  }
  // Otherwise a header b0..b{K-1} and one row, used at every step.
  std::string row;
  while (std::getline(in, row) && row.empty()) {
  }
  std::stringstream ss(row);
  std::vector<double> vals;
  for (std::string cell; std::getline(ss, cell, ',');) {
    try {
      vals.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ParseError("bad gate value '" + cell + "' in " + path, 2);
    }
  }
  return force_observation(Eigen::Map<Eigen::RowVectorXd>(vals.data(),
                                                          static_cast<Eigen::Index>(vals.size())),
                           slots);
}

}  // namespace

void finalize(CommandResult& r, const std::string& dir, const std::string& command,
              const json& options) {
  json echo;
  echo["command"] = command;
  echo["options"] = options;
  const std::string cp = join(dir, "command.json");
  open_out(cp) << echo.dump(2) << '\n';
  r.artifacts.insert(r.artifacts.begin(), cp);
  const std::string sp = join(dir, "summary.json");
  r.artifacts.push_back(sp);
  r.summary["command"] = command;
  r.summary["output_dir"] = dir;
  r.summary["artifacts"] = r.artifacts;
  open_out(sp) << r.summary.dump(2) << '\n';
  r.exit_code = 0;
  for (const auto& a : r.artifacts)
    if (!fs::exists(a)) {
      spdlog::error("declared output {} was not written", a);
      r.exit_code = 1;
    }
}

CommandResult run_synth(const SynthOptions& o, const std::string& dir) {
  ScenarioSpec spec;
  spec.seed = o.seed;
  spec.n_defenders = o.defenders;
  spec.n_attackers = o.attackers;
  spec.num_frames = o.frames;
  spec.noise = o.noise;
  spec.min_segment = o.min_segment;
  spec.max_segment = o.max_segment;
  const auto ds = generate_dataset(spec, {o.train, o.val, o.test});
  CommandResult r;
  const std::string tp = join(dir, "tracking.jsonl");
  write_tracking(tp, all_sequences(ds.dataset));
  const std::string mp = join(dir, "tracking.mask.json");
  write_mask_json(mp, ds.scenarios);
  r.artifacts = {tp, mp};
  r.summary["sequences"] = split_counts(ds.dataset);
  r.summary["jerk_bound"] = jerk_bound(spec);
  finalize(r, dir, "synth",
           {{"seed", o.seed}, {"train", o.train}, {"val", o.val}, {"test", o.test},
            {"defenders", o.defenders}, {"attackers", o.attackers}, {"frames", o.frames},
            {"noise", o.noise}, {"min_segment", o.min_segment}, {"max_segment", o.max_segment}});
  return r;
}

CommandResult run_ingest(const IngestOptions& o, const std::string& dir) {
  if (o.inputs.empty()) throw MissingInput("no input files given");
  Dataset merged;
  std::vector<std::string> warnings;
  for (const auto& path : o.inputs) {
    require_file(path, "tracking file");
    mapo::IngestOptions io;
    io.strict = o.strict;
    io.normalize_direction = o.normalize;
    auto res = ingest_tracking(path, io);
    for (auto& w : res.warnings) warnings.push_back(path + ": " + w);
    for (Split s : {Split::kTrain, Split::kVal, Split::kTest})
      for (auto& seq : res.dataset.split(s))
        merged.split(s).push_back(canonical_agent_order(seq));
  }
  std::set<std::string> ids;
  for (const auto* s : merged.all())
    if (!ids.insert(s->sequence_id).second)
      throw SchemaError("sequence_id '" + s->sequence_id + "' appears more than once");
  const Dataset windows = split_windows(merged, o.burn_in, o.horizon);
  for (const auto& w : warnings) spdlog::warn("{}", w);

  CommandResult r;
  const std::string tp = join(dir, "windows.jsonl");
  write_tracking(tp, all_sequences(windows));
  r.artifacts.push_back(tp);
  if (o.csv) {
    const std::string cp = join(dir, "windows.csv");
    auto out = open_out(cp);
    write_tracking_csv(out, all_sequences(windows));
    r.artifacts.push_back(cp);
  }
  r.summary["sequences"] = split_counts(merged);
  r.summary["windows"] = split_counts(windows);
  r.summary["warnings"] = warnings;
  finalize(r, dir, "ingest",
           {{"input", o.inputs}, {"strict", o.strict}, {"normalize", o.normalize},
            {"burn_in", o.burn_in}, {"horizon", o.horizon}, {"csv", o.csv}});
  return r;
}

CommandResult run_assign(const AssignOptions& o, const std::string& dir) {
  require_file(o.data, "tracking file");
  const Dataset data = ingest_tracking(o.data).dataset;
  if (data.train.empty()) throw MissingInput("no train sequences in '" + o.data + "'");
  FeatureOptions fo{o.ball_relative};
  std::vector<FeatureSequence> feats;
  for (const auto& s : data.train) {
    auto f = defender_features(s, fo);
    feats.insert(feats.end(), f.begin(), f.end());
  }
  const int roles =
      o.roles > 0 ? o.roles : static_cast<int>(data.train.front().indices_of(AgentRole::kDefense).size());
  const HmmFit fit = fit_role_hmm(feats, roles, {o.max_iters, o.tol, o.seed});
  for (const auto& w : fit.warnings) spdlog::warn("{}", w);

  RoleAssignmentOptions ro;
  ro.mode = o.per_timestep ? AssignmentMode::kPerTimestep : AssignmentMode::kPerSequence;
  ro.features = fo;
  std::vector<PlaySequence> out;
  for (const auto* s : data.all()) out.push_back(assign_roles(*s, fit.model, ro));

  CommandResult r;
  const std::string tp = join(dir, "assigned.jsonl");
  write_tracking(tp, out);
  const std::string mp = join(dir, "role_model.json");
  open_out(mp) << role_model_json(fit.model) << '\n';
  const std::string lp = join(dir, "em_log.csv");
  {
    auto log = open_out(lp);
    log << "iteration,log_likelihood\n";
    for (std::size_t i = 0; i < fit.log_likelihood.size(); ++i)
      log << fmt::format("{},{:.17g}\n", i + 1, fit.log_likelihood[i]);
  }
  r.artifacts = {tp, mp, lp};
  r.summary["roles"] = roles;
  r.summary["iterations"] = fit.log_likelihood.size();
  r.summary["converged"] = fit.converged;
  r.summary["final_log_likelihood"] =
      fit.log_likelihood.empty() ? 0.0 : fit.log_likelihood.back();
  finalize(r, dir, "assign-roles",
           {{"data", o.data}, {"roles", o.roles}, {"per_timestep", o.per_timestep},
            {"ball_relative", o.ball_relative}, {"max_iters", o.max_iters}, {"tol", o.tol},
            {"seed", o.seed}});
  return r;
}

CommandResult run_train(const TrainOptions& o, const std::string& dir) {
  require_file(o.data, "tracking file");
  TrainConfig base;
  if (!o.config.empty()) {
    require_file(o.config, "config file");
    base = load_train_config(o.config);
  }
  // Same order as the file parser: sport, then preset, then the rest.
  std::vector<std::pair<std::string, std::string>> sets;
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    sets.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  const auto rank = [](const std::string& k) { return k == "sport" ? 0 : k == "preset" ? 1 : 2; };
  std::stable_sort(sets.begin(), sets.end(),
                   [&](const auto& a, const auto& b) { return rank(a.first) < rank(b.first); });
  for (const auto& [key, value] : sets) set_config_value(base, key, value);
  std::vector<int> roles = o.roles;
  if (roles.empty()) roles.push_back(base.role);

  const Dataset data = ingest_tracking(o.data).dataset;
  if (data.train.empty()) throw MissingInput("no train sequences in '" + o.data + "'");
  const GridSpec grid = base.policy.grid;
  std::vector<PreparedWindow> train, val;
  for (const auto& s : data.train) train.push_back(prepare_window(s, grid, base.policy.labels));
  for (const auto& s : data.val) val.push_back(prepare_window(s, grid, base.policy.labels));

  auto train_role = [&](int role) {
    TrainConfig c = base;
    c.role = role;
    c.out_dir = join(dir, fmt::format("role_{}", role));
    TrainResult res = train_policy(c, train, val);
    const auto& best = res.checkpoints[res.best];
    const std::string bp = join(c.out_dir, "best.json");
    open_out(bp) << best.checkpoint.dump() << '\n';
    json s = {{"role", role},
              {"variant", c.policy.variant_name()},
              {"best_epoch", best.epoch},
              {"best_val_score", best.val_score},
              {"best_checkpoint", bp},
              {"metrics", res.metrics_path},
              {"parameters", res.model->parameter_count()}};
    std::vector<std::string> files{bp, res.metrics_path, join(c.out_dir, "config.txt")};
    for (const auto& cp : res.checkpoints) files.push_back(cp.path);
    return std::pair{s, files};
  };

  CommandResult r;
  r.summary["roles"] = json::array();
  const int workers = std::max(1, o.parallel_roles);
  for (std::size_t i = 0; i < roles.size(); i += static_cast<std::size_t>(workers)) {
    std::vector<std::future<std::pair<json, std::vector<std::string>>>> jobs;
    for (std::size_t j = i; j < std::min(roles.size(), i + workers); ++j)
      jobs.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                train_role, roles[j]));
    for (auto& f : jobs) {
      auto [s, files] = f.get();
      r.summary["roles"].push_back(s);
      r.artifacts.insert(r.artifacts.end(), files.begin(), files.end());
    }
  }
  const std::string ep = join(dir, "config.txt");
  open_out(ep) << config_text(base);
  r.artifacts.push_back(ep);
  finalize(r, dir, "train",
           {{"data", o.data}, {"config", config_json(base)}, {"roles", roles},
            {"parallel_roles", o.parallel_roles}});
  return r;
}

CommandResult run_evaluate(const cli::RolloutOptions& o, const std::string& dir) {
  const bool velocity = o.models.size() == 1 && o.models.front() == "velocity";
  CommandResult r;
  MetricReport report;
  const int frames = o.burn_in + o.horizon;
  if (velocity) {
    const auto windows = load_windows(o.data, o.split, default_grid(Sport::kBasketball), {},
                                      o.max_windows);
    std::vector<int> roles = o.roles;
    if (roles.empty()) {
      const auto ds = ingest_tracking(o.data).dataset;
      roles = ds.split(parse_split(o.split)).front().indices_of(AgentRole::kDefense);
    }
    std::vector<std::vector<Trajectory>> samples;
    std::vector<Trajectory> truth;
    for (const auto& w : windows) {
      samples.push_back({velocity_baseline(w, roles, o.burn_in, o.horizon)});
      truth.push_back(ground_truth_states(w, roles, frames));
    }
    report = evaluate_samples("Velocity", samples, truth, o.burn_in, frames);
  } else {
    if (o.models.empty()) throw MissingInput("no model given");
    const LoadedModels models = load_models(o.models);
    const auto& cfg = models.ptrs.front()->config();
    const auto windows = load_windows(o.data, o.split, cfg.grid, cfg.labels, o.max_windows);
    const auto results = run_models(models, windows, to_rollout(o), o.seed);
    std::vector<std::vector<Trajectory>> samples;
    std::vector<Trajectory> truth;
    for (std::size_t w = 0; w < results.size(); ++w) {
      samples.push_back(results[w].samples);
      truth.push_back(ground_truth_states(windows[w], results[w].roles, frames));
    }
    report = evaluate_samples(cfg.variant_name(), samples, truth, o.burn_in, frames);
    if (any_gate(models)) report.observation = observation_stats(results, windows, o.burn_in);
  }
  const std::string jp = join(dir, "report.json");
  open_out(jp) << report.to_json().dump(2) << '\n';
  const std::string tp = join(dir, "report.txt");
  open_out(tp) << report.table();
  r.artifacts = {jp, tp};
  r.summary["report"] = report.to_json();
  finalize(r, dir, "evaluate", rollout_options_json(o));
  return r;
}

CommandResult run_rollout(const cli::RolloutOptions& o, const std::string& dir) {
  if (o.models.empty()) throw MissingInput("no model given");
  const LoadedModels models = load_models(o.models);
  const auto& cfg = models.ptrs.front()->config();
  const auto windows = load_windows(o.data, o.split, cfg.grid, cfg.labels, o.max_windows);
  const auto results = run_models(models, windows, to_rollout(o), o.seed);
  CommandResult r;
  r.artifacts = write_rollouts(dir, "", results, windows, o.burn_in + o.horizon,
                               any_gate(models), any_macro(models));
  r.summary["windows"] = windows.size();
  r.summary["samples"] = o.samples;
  r.summary["roles"] = results.front().roles;
  finalize(r, dir, "rollout", rollout_options_json(o));
  return r;
}

CommandResult run_counterfactual(const CounterfactualOptions& o, const std::string& dir) {
  if (o.mode != "one-hot" && o.mode != "custom")
    throw std::invalid_argument("mode must be one-hot or custom");
  if (o.rollout.models.empty()) throw MissingInput("no model given");
  const LoadedModels models = load_models(o.rollout.models);
  const auto& cfg = models.ptrs.front()->config();
  const auto windows =
      load_windows(o.rollout.data, o.rollout.split, cfg.grid, cfg.labels, o.rollout.max_windows);
  const int slots = windows.front().slots();

  mapo::RolloutOptions base = to_rollout(o.rollout);
  mapo::RolloutOptions forced = base;
  forced.gate_override = o.mode == "one-hot" ? GateOverride::one_hot_argmax()
                                             : read_custom_override(o.gate_file, slots);
  const auto normal = run_models(models, windows, base, o.rollout.seed);
  const auto cf = run_models(models, windows, forced, o.rollout.seed);

  const int frames = o.rollout.burn_in + o.rollout.horizon;
  double div = 0.0;
  long count = 0;
  bool matches = true;
  for (std::size_t w = 0; w < cf.size(); ++w) {
    for (std::size_t n = 0; n < cf[w].samples.size(); ++n)
      for (int t = o.rollout.burn_in; t < frames; ++t)
        for (std::size_t j = 0; j < cf[w].roles.size(); ++j) {
          div += (cf[w].samples[n][t][j].position - normal[w].samples[n][t][j].position).norm();
          ++count;
        }
    for (const auto& e : cf[w].gates) {
      if (o.mode == "one-hot") {
        matches = matches && e.b.sum() == 1.0 && e.b.maxCoeff() == 1.0;
      } else if (auto want = forced.gate_override->resolve(e.t, e.role, e.b)) {
        matches = matches && (*want - e.b).cwiseAbs().maxCoeff() == 0.0;
      }
    }
  }
  CommandResult r;
  r.artifacts = write_rollouts(dir, "", cf, windows, frames, true, any_macro(models));
  const auto nb = write_rollouts(dir, "baseline_", normal, windows, frames, true,
                                 any_macro(models));
  r.artifacts.insert(r.artifacts.end(), nb.begin(), nb.end());
  r.summary["mode"] = o.mode;
  r.summary["mean_position_divergence"] = count ? div / static_cast<double>(count) : 0.0;
  r.summary["logged_gate_matches_override"] = matches;
  json opts = rollout_options_json(o.rollout);
  opts["mode"] = o.mode;
  opts["gate_file"] = o.gate_file;
  finalize(r, dir, "counterfactual", opts);
  return r;
}

CommandResult run_plot(const PlotOptions& o, const std::string& dir) {
  const std::string rp = join(o.run, "rollouts.csv");
  const std::string tp = join(o.run, "truth.csv");
  require_file(rp, "rollout file");
  require_file(tp, "truth file");
  CommandResult r;
  const auto rolls = read_state_csv(rp);
  const auto truth = read_state_csv(tp);
  std::vector<std::string> ids;
  for (const auto& [id, _] : truth)
    if (static_cast<int>(ids.size()) < o.max_windows) ids.push_back(id);
  for (const auto& id : ids) {
    const auto& tr = truth.at(id);
    const auto it = rolls.find(id);
    const StateTable empty;
    const StateTable& ro = it == rolls.end() ? empty : it->second;
    const std::string safe = sanitize(id);
    const std::string a = join(dir, "trajectories_" + safe + ".svg");
    write_trajectory_svg(a, tr, ro);
    const std::string b = join(dir, "acceleration_" + safe + ".svg");
    write_acceleration_svg(b, tr, ro);
    r.artifacts.push_back(a);
    r.artifacts.push_back(b);
  }
  const std::string gp = join(o.run, "gates.csv");
  if (fs::is_regular_file(gp)) {
    const auto gates = read_gate_csv(gp);
    for (const auto& id : ids) {
      const auto it = gates.find(id);
      if (it == gates.end()) continue;
      for (const auto& [role, rows] : it->second) {
        const std::string base = join(dir, fmt::format("gates_{}_role{}", sanitize(id), role));
        write_gate_chart(base + ".svg", base + ".csv", rows);
        r.artifacts.push_back(base + ".svg");
        r.artifacts.push_back(base + ".csv");
      }
    }
  }
  r.summary["windows"] = ids.size();
  finalize(r, dir, "plot", {{"run", o.run}, {"max_windows", o.max_windows}});
  return r;
}

}  // namespace mapo::cli
