// Subcommand implementations behind the mapo executable.
#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mapo::cli {

/// Raised for absent input files; maps to exit code 1.
class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommandResult {
  int exit_code = 0;
  std::vector<std::string> artifacts;
  nlohmann::ordered_json summary;
};

struct SynthOptions {
  std::uint64_t seed = 0;
  int train = 200;
  int val = 20;
  int test = 20;
  int defenders = 5;
  int attackers = 5;
  int frames = 80;
  double noise = 0.0;
  double min_segment = 1.0;
  double max_segment = 2.5;
};

struct IngestOptions {
  std::vector<std::string> inputs;
  bool strict = false;
  bool normalize = true;
  int burn_in = 20;
  int horizon = 60;
  bool csv = false;
};

struct AssignOptions {
  std::string data;
  int roles = 0;  // 0: number of defenders
  bool per_timestep = false;
  bool ball_relative = false;
  int max_iters = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

struct TrainOptions {
  std::string data;
  std::string config;
  std::vector<std::string> overrides;  // key=value
  std::vector<int> roles;
  int parallel_roles = 1;
};

struct RolloutOptions {
  std::vector<std::string> models;
  std::string data;
  std::string split = "test";
  int samples = 10;
  int burn_in = 20;
  int horizon = 60;
  std::uint64_t seed = 0;
  int max_windows = 0;  // 0: all
  std::vector<int> roles;  // velocity baseline only
};

struct CounterfactualOptions {
  RolloutOptions rollout;
  std::string mode = "one-hot";
  std::string gate_file;
};

struct PlotOptions {
  std::string run;
  int max_windows = 3;
};

/// Every command writes into `dir`, echoing its resolved options to
/// command.json and its summary to summary.json.
CommandResult run_synth(const SynthOptions& o, const std::string& dir);
CommandResult run_ingest(const IngestOptions& o, const std::string& dir);
CommandResult run_assign(const AssignOptions& o, const std::string& dir);
CommandResult run_train(const TrainOptions& o, const std::string& dir);
CommandResult run_evaluate(const RolloutOptions& o, const std::string& dir);
CommandResult run_rollout(const RolloutOptions& o, const std::string& dir);
CommandResult run_counterfactual(const CounterfactualOptions& o, const std::string& dir);
CommandResult run_plot(const PlotOptions& o, const std::string& dir);

/// Writes command.json and summary.json, checks every artifact exists and
/// sets the exit code accordingly.
void finalize(CommandResult& r, const std::string& dir, const std::string& command,
              const nlohmann::ordered_json& options);

}  // namespace mapo::cli
