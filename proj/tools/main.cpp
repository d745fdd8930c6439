// mapo: command-line entry point for the multi-agent trajectory pipeline.
#include "commands.hpp"

#include "mapo/errors.hpp"

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>

namespace fs = std::filesystem;
using namespace mapo::cli;

namespace {

/// --out wins; otherwise $MAPO_OUTPUT_ROOT (default ./runs) plus a stamped
/// subdirectory.
std::string output_dir(const std::string& command, const std::string& out) {
  fs::path dir;
  if (!out.empty()) {
    dir = out;
  } else {
    const char* root = std::getenv("MAPO_OUTPUT_ROOT");
    const std::time_t now = std::time(nullptr);
    const std::string stamp = fmt::format("{}-{:%Y%m%d-%H%M%S}", command, fmt::localtime(now));
    dir = fs::path(root && *root ? root : "runs") / stamp;
    for (int i = 1; fs::exists(dir); ++i)
      dir = fs::path(root && *root ? root : "runs") / fmt::format("{}-{}", stamp, i);
  }
  fs::create_directories(dir);
  return dir.string();
}

void add_rollout_flags(CLI::App* c, RolloutOptions& o, bool require_model) {
  auto* m = c->add_option("--model", o.models, "Checkpoint file, one per role");
  if (require_model) m->required();
  c->add_option("--data", o.data, "Tracking JSON-Lines file")->required();
  c->add_option("--split", o.split, "train, val or test")->capture_default_str();
  c->add_option("--burn-in", o.burn_in, "Ground-truth steps")->capture_default_str();
  c->add_option("--horizon", o.horizon, "Generated steps")->capture_default_str();
  c->add_option("--seed", o.seed, "Sampling seed")->capture_default_str();
  c->add_option("--max-windows", o.max_windows, "Limit on windows (0: all)")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent trajectory modelling with partial observation, macro goals "
               "and mechanical constraints"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string out;
  bool verbose = false;
  app.add_option("--out", out, "Output directory (default: $MAPO_OUTPUT_ROOT/<command>-<time>)");
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "Generate synthetic scenarios with planted tracking");
  synth->add_option("--seed", so.seed)->capture_default_str();
  synth->add_option("--train", so.train)->capture_default_str();
  synth->add_option("--val", so.val)->capture_default_str();
  synth->add_option("--test", so.test)->capture_default_str();
  synth->add_option("--defenders", so.defenders)->capture_default_str();
  synth->add_option("--attackers", so.attackers)->capture_default_str();
  synth->add_option("--frames", so.frames)->capture_default_str();
  synth->add_option("--noise", so.noise, "Position noise std in meters")->capture_default_str();
  synth->add_option("--min-segment", so.min_segment)->capture_default_str();
  synth->add_option("--max-segment", so.max_segment)->capture_default_str();

  IngestOptions io;
  auto* ingest = app.add_subcommand("ingest", "Validate, normalise and window tracking files");
  ingest->add_option("--input", io.inputs, "Tracking JSON-Lines file(s)")->required();
  ingest->add_flag("--strict", io.strict, "Fail on gaps instead of dropping sequences");
  ingest->add_flag("--normalize,!--no-normalize", io.normalize, "Mirror plays to attack left")
      ->capture_default_str();
  ingest->add_option("--burn-in", io.burn_in)->capture_default_str();
  ingest->add_option("--horizon", io.horizon)->capture_default_str();
  ingest->add_flag("--csv", io.csv, "Also export windows.csv");

  AssignOptions ao;
  auto* assign = app.add_subcommand("assign-roles", "Fit the role HMM and reindex defenders");
  assign->add_option("--data", ao.data, "Tracking JSON-Lines file")->required();
  assign->add_option("--roles", ao.roles, "Role count (default: defenders)");
  assign->add_flag("--per-timestep", ao.per_timestep, "Match roles at every frame");
  assign->add_flag("--ball-relative", ao.ball_relative, "Add ball-relative features");
  assign->add_option("--max-iters", ao.max_iters)->capture_default_str();
  assign->add_option("--tol", ao.tol)->capture_default_str();
  assign->add_option("--seed", ao.seed)->capture_default_str();

  TrainOptions to;
  auto* train = app.add_subcommand("train", "Train per-role policies");
  train->add_option("--data", to.data, "Tracking JSON-Lines file")->required();
  train->add_option("--config", to.config, "key = value configuration file");
  train->add_option("--set", to.overrides, "Configuration override key=value");
  train->add_option("--role", to.roles, "Role(s) to train (default: config role)");
  train->add_option("--parallel-roles", to.parallel_roles, "Roles trained concurrently")
      ->capture_default_str();

  RolloutOptions eo;
  auto* evaluate = app.add_subcommand("evaluate", "Roll out and report L2 and acceleration metrics");
  add_rollout_flags(evaluate, eo, true);
  evaluate->add_option("--n", eo.samples, "Samples per window")->capture_default_str();
  evaluate->add_option("--roles", eo.roles, "Evaluated slots for --model velocity");

  RolloutOptions ro;
  auto* roll = app.add_subcommand("rollout", "Sample trajectories and log gates and goals");
  add_rollout_flags(roll, ro, true);
  roll->add_option("--n", ro.samples, "Samples per window")->capture_default_str();

  CounterfactualOptions co;
  auto* cf = app.add_subcommand("counterfactual", "Roll out with forced observation gates");
  add_rollout_flags(cf, co.rollout, true);
  cf->add_option("--n", co.rollout.samples, "Samples per window")->capture_default_str();
  cf->add_option("--mode", co.mode, "one-hot or custom")
      ->check(CLI::IsMember({"one-hot", "custom"}))
      ->capture_default_str();
  cf->add_option("--gate-file", co.gate_file, "CSV for custom mode");

  PlotOptions po;
  auto* plot = app.add_subcommand("plot", "Render SVG figures from a rollout directory");
  plot->add_option("--run", po.run, "rollout or counterfactual output directory")->required();
  plot->add_option("--max-windows", po.max_windows)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  const std::map<CLI::App*, std::pair<std::string, std::function<CommandResult(const std::string&)>>>
      table = {
          {synth, {"synth", [&](const std::string& d) { return run_synth(so, d); }}},
          {ingest, {"ingest", [&](const std::string& d) { return run_ingest(io, d); }}},
          {assign, {"assign-roles", [&](const std::string& d) { return run_assign(ao, d); }}},
          {train, {"train", [&](const std::string& d) { return run_train(to, d); }}},
          {evaluate, {"evaluate", [&](const std::string& d) { return run_evaluate(eo, d); }}},
          {roll, {"rollout", [&](const std::string& d) { return run_rollout(ro, d); }}},
          {cf, {"counterfactual", [&](const std::string& d) { return run_counterfactual(co, d); }}},
          {plot, {"plot", [&](const std::string& d) { return run_plot(po, d); }}},
      };
  for (const auto& [sub, entry] : table) {
    if (!sub->parsed()) continue;
    try {
      const std::string dir = output_dir(entry.first, out);
      CommandResult r = entry.second(dir);
      std::cout << r.summary.dump(2) << std::endl;
      return r.exit_code;
    } catch (const MissingInput& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}
