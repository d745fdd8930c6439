#include "helpers.hpp"

#include "mapo/errors.hpp"
#include "mapo/training.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

using namespace mapo;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_train(ConstraintPreset preset, int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 2;
  c.learning_rate = 3e-3;
  c.seed = 17;
  c.preset = preset;
  c.policy = test::tiny_policy(3, true, true, true);
  c.policy.embed_dim = 2;
  c.policy.hidden = 8;
  c.policy.latent = 2;
  c.policy.gru_hidden = 8;
  c.policy.constraints = ConstraintConfig::preset(preset);
  c.burn_in = 3;
  c.horizon = 5;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mapo_test_" + name);
  fs::remove_all(p);
  return p;
}

/// term -> number of rows in a metrics CSV.
std::map<std::string, int> logged_terms(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,split,term,value");
  std::map<std::string, int> out;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string epoch, split, term;
    std::getline(ss, epoch, ',');
    std::getline(ss, split, ',');
    std::getline(ss, term, ',');
    ++out[term];
  }
  return out;
}

std::vector<double> snapshot(PolicyModel& m) {
  std::vector<double> v;
  for (auto* p : m.parameters()) v.insert(v.end(), p->value.data(), p->value.data() + p->size());
  for (const auto& b : m.buffers())
    v.insert(v.end(), b.value->data(), b.value->data() + b.value->size());
  return v;
}

}  // namespace

TEST_CASE("training reduces the reconstruction loss on a few windows") {
  const auto ws = test::tiny_windows(4, 10, 3);
  auto cfg = tiny_train(ConstraintPreset::kVrnn, 60);
  cfg.policy.use_gate = false;
  cfg.policy.use_macro = false;
  const auto r = train_policy(cfg, ws, {});
  REQUIRE(r.history.size() == 60u);
  const double first = r.history.front().train.recon / 4.0;
  const double last = r.history.back().train.recon / 4.0;
  MESSAGE("recon per window ", first, " -> ", last);
  CHECK(last < first);
  for (const auto& rec : r.history) CHECK(std::abs(rec.train.decomposition_gap(1.0)) < 1e-6);
}

TEST_CASE("the same seed gives bit-identical checkpoints") {
  const auto ws = test::tiny_windows(5, 9, 4);
  const auto val = test::tiny_windows(2, 9, 5);
  const auto cfg = tiny_train(ConstraintPreset::kMech, 3);
  const auto a = train_policy(cfg, ws, val);
  const auto b = train_policy(cfg, ws, val);
  REQUIRE(a.checkpoints.size() == 3u);
  for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
    CHECK(a.checkpoints[i].checkpoint.dump() == b.checkpoints[i].checkpoint.dump());
    CHECK(a.history[i].val_score == b.history[i].val_score);
  }
  auto other = cfg;
  other.seed = 18;
  const auto c = train_policy(other, ws, val);
  CHECK(c.checkpoints.back().checkpoint.dump() != a.checkpoints.back().checkpoint.dump());
}

TEST_CASE("metrics log exactly the terms of each preset") {
  const auto ws = test::tiny_windows(3, 9, 6);
  const auto val = test::tiny_windows(2, 9, 7);
  const std::map<ConstraintPreset, std::set<std::string>> declared = {
      {ConstraintPreset::kVrnn, {}},
      {ConstraintPreset::kPos, {"pos_nll"}},
      {ConstraintPreset::kPosAcc, {"pos_nll", "kl_acc"}},
      {ConstraintPreset::kPosAccJrk, {"pos_nll", "kl_acc", "jerk"}},
      {ConstraintPreset::kMech, {"pos_nll", "kl_acc", "jerk", "acc_recon"}},
  };
  const std::set<std::string> penalties = {"pos_nll", "kl_acc", "jerk", "acc_recon"};
  for (const auto& [preset, terms] : declared) {
    CAPTURE(std::string(to_string(preset)));
    auto cfg = tiny_train(preset, 2);
    const auto dir = scratch("metrics_" + std::string(to_string(preset)));
    cfg.out_dir = dir.string();
    const auto r = train_policy(cfg, ws, val);
    const auto logged = logged_terms(r.metrics_path);
    std::set<std::string> seen;
    for (const auto& [term, count] : logged)
      if (penalties.count(term)) {
        seen.insert(term);
        CHECK(count == 4);  // 2 epochs x {train, val}
      }
    CHECK(seen == terms);
    CHECK(logged.at("total") == 4);
    CHECK(logged.at("recon") == 4);
    CHECK(logged.at("kl") == 4);
    CHECK(logged.at("macro_ce") == 4);
    CHECK(logged.at("score") == 2);
    CHECK(fs::exists(dir / "config.txt"));
    CHECK(fs::exists(dir / "checkpoint_epoch002.json"));
    fs::remove_all(dir);
  }
}

TEST_CASE("RNN-Gauss logs no kl rows") {
  const auto ws = test::tiny_windows(2, 9, 8);
  auto cfg = tiny_train(ConstraintPreset::kVrnn, 1);
  cfg.policy.use_latent = false;
  const auto dir = scratch("rnn_gauss");
  cfg.out_dir = dir.string();
  const auto r = train_policy(cfg, ws, {});
  const auto logged = logged_terms(r.metrics_path);
  CHECK(logged.count("kl") == 0);
  CHECK(logged.at("recon") == 1);
  fs::remove_all(dir);
}

TEST_CASE("select_best picks the lowest score and the earliest on ties") {
  auto cps = [](std::vector<std::pair<int, double>> v) {
    std::vector<ScoredCheckpoint> out;
    for (auto [e, s] : v) out.push_back({e, s, "", {}});
    return out;
  };
  CHECK(select_best(cps({{1, 3.0}})) == 0);
  CHECK(select_best(cps({{1, 3.0}, {2, 2.0}, {3, 1.0}})) == 2);
  CHECK(select_best(cps({{1, 1.0}, {2, 2.0}, {3, 3.0}})) == 0);
  CHECK(select_best(cps({{1, 2.0}, {2, 1.0}, {3, 1.0}})) == 1);
  CHECK(select_best(cps({{3, 1.0}, {2, 1.0}})) == 1);
  CHECK_THROWS(select_best(std::span<const ScoredCheckpoint>{}));
}

TEST_CASE("training result points at the best checkpoint") {
  const auto ws = test::tiny_windows(4, 9, 9);
  const auto val = test::tiny_windows(2, 9, 10);
  auto cfg = tiny_train(ConstraintPreset::kPos, 4);
  const auto r = train_policy(cfg, ws, val);
  for (const auto& c : r.checkpoints) CHECK(r.checkpoints[r.best].val_score <= c.val_score);
}

TEST_CASE("select_best over files rescored on validation data") {
  const auto ws = test::tiny_windows(4, 9, 11);
  const auto val = test::tiny_windows(3, 9, 12);
  auto cfg = tiny_train(ConstraintPreset::kMech, 3);
  cfg.metric = SelectionMetric::kLoss;
  const auto dir = scratch("select");
  cfg.out_dir = dir.string();
  const auto r = train_policy(cfg, ws, val);
  std::vector<std::string> paths;
  double best = std::numeric_limits<double>::infinity();
  std::size_t expect = 0;
  for (std::size_t i = 0; i < r.checkpoints.size(); ++i) {
    paths.push_back(r.checkpoints[i].path);
    auto m = load_checkpoint(paths.back());
    const auto v = evaluate_loss(*m.model, val, cfg.batch_size, cfg.seed);
    const double s = v.total / static_cast<double>(v.windows);
    CHECK(s == doctest::Approx(r.checkpoints[i].val_score).epsilon(1e-12));
    if (s < best) {
      best = s;
      expect = i;
    }
  }
  CHECK(select_best(paths, val, cfg) == expect);
  CHECK(r.best == expect);
  fs::remove_all(dir);
}

TEST_CASE("validation leaves parameters and statistics untouched") {
  const auto ws = test::tiny_windows(3, 9, 13);
  nn::Rng rng(1);
  auto pc = tiny_train(ConstraintPreset::kMech, 1).policy;
  PolicyModel m(pc, 0, rng);
  m.set_scaling(fit_scaling(ws, 0));
  const auto before = snapshot(m);
  const auto a = evaluate_loss(m, ws, 2, 5);
  validation_position_l2(m, ws, 3, 5, 2, 5);
  CHECK(snapshot(m) == before);
  const auto b = evaluate_loss(m, ws, 2, 5);
  CHECK(a.total == b.total);
  CHECK(a.windows == 3);
  CHECK(std::abs(a.decomposition_gap(pc.macro_weight)) < 1e-9);
}

TEST_CASE("config text round trips") {
  TrainConfig c;
  c.epochs = 12;
  c.learning_rate = 2.5e-4;
  c.seed = 123456789012ull;
  c.sport = Sport::kSoccer;
  c.preset = ConstraintPreset::kPosAcc;
  c.policy.grid = default_grid(Sport::kSoccer);
  c.policy.constraints = ConstraintConfig::preset(c.preset, c.sport);
  c.policy.constraints.lambda_pos = 0.125;
  c.policy.use_gate = true;
  c.policy.use_latent = false;
  c.metric = SelectionMetric::kLoss;
  c.out_dir = "runs/x";
  std::istringstream in(config_text(c));
  const auto back = parse_train_config(in);
  CHECK(config_text(back) == config_text(c));
  CHECK(back.policy.constraints.lambda_pos == 0.125);
  CHECK(back.policy.grid.rows == c.policy.grid.rows);
  CHECK(config_json(back).dump() == config_json(c).dump());
}

TEST_CASE("config keys may come in any order") {
  std::istringstream in("lambda_pos = 2.0  # after the preset\npreset = mech\nsport = basketball\n");
  const auto c = parse_train_config(in);
  CHECK(c.preset == ConstraintPreset::kMech);
  CHECK(c.policy.constraints.use_acc_recon);
  CHECK(c.policy.constraints.lambda_pos == 2.0);
}

TEST_CASE("config errors name the line") {
  auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_train_config(in);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("epochs = 3\n\n# c\nbogus = 1\n").find("line 4") != std::string::npos);
  CHECK(message("epochs = 3\nepochs three\n").find("line 2") != std::string::npos);
  CHECK(message("epochs = 3x\n").find("line 1") != std::string::npos);
  CHECK(message("preset = tight\n").find("line 1") != std::string::npos);
  CHECK(message("gate = maybe\n").find("line 1") != std::string::npos);
  CHECK(message("epochs = 0\n") != "no error");
  CHECK(message("role = 11\n") != "no error");
  CHECK_THROWS(load_train_config("/nonexistent/config.txt"));
}

TEST_CASE("set_config_value applies overrides") {
  TrainConfig c;
  set_config_value(c, "variant", "rnn_gauss");
  CHECK_FALSE(c.policy.use_latent);
  set_config_value(c, "preset", "c_pos_acc_jrk");
  CHECK(c.policy.constraints.use_jerk);
  CHECK_FALSE(c.policy.constraints.use_acc_recon);
  set_config_value(c, "sport", "soccer");
  CHECK(c.policy.constraints.lambda_pos ==
        doctest::Approx(ConstraintConfig::preset(ConstraintPreset::kPosAccJrk).lambda_pos * 0.1));
  CHECK_THROWS_AS(set_config_value(c, "nope", "1"), ConfigError);
}

TEST_CASE("training rejects empty input") {
  const auto cfg = tiny_train(ConstraintPreset::kVrnn, 1);
  CHECK_THROWS(train_policy(cfg, {}, {}));
}
