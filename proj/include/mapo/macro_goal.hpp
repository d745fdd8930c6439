// Macro-goals: a court grid, weak labels from stationary segments, and a
// recurrent categorical predictor over grid cells.
#pragma once

#include "mapo/nn.hpp"
#include "mapo/trajectory.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mapo {

struct GridSpec {
  int rows = 0;          // along y
  int cols = 0;          // along x
  double cell_w = 0.0;   // meters along x
  double cell_h = 0.0;   // meters along y
  double x0 = 0.0;       // corner of cell 0
  double y0 = 0.0;

  int cells() const { return rows * cols; }
  void validate() const;
};

/// Basketball: 10 rows x 9 cols of 5 ft cells from the half-court corner.
/// Soccer: 22 rows x 34 cols tiling the pitch (about 3 m cells).
GridSpec default_grid(Sport sport);

/// Row-major index r * cols + c; positions outside the grid are clamped.
int grid_cell(const Vec2& p, const GridSpec& grid);
Vec2 cell_center(int index, const GridSpec& grid);

struct LabelOptions {
  double speed_threshold = 0.5;  // m/s
  double min_hold = 0.5;         // s
};

/// Labels one track: each step gets the cell of the mean position of the
/// next stationary segment that has not yet ended; steps after the last
/// stop get the cell of the final position.
std::vector<int> label_track(std::span<const Vec2> positions,
                             std::span<const Vec2> velocities, double dt,
                             const GridSpec& grid, const LabelOptions& options = {});

/// labels[d][t] for every defender, in defender order.
std::vector<std::vector<int>> label_macro_goals(const PlaySequence& seq,
                                                const GridSpec& grid,
                                                const LabelOptions& options = {});

/// CSV with header sequence_id,t,role,cell.
void write_macro_labels(std::ostream& out, const std::string& sequence_id,
                        const std::vector<std::vector<int>>& labels);

struct MacroGoalConfig {
  int cells = 90;
  int obs_dim = 0;
  int hidden = 64;
  int gru_hidden = 100;
  int gru_layers = 2;
  bool batch_norm = true;
  double dropout = 0.5;
};

/// h_g evolves as GRU([onehot(g'), o_{t-1}], h_g); the categorical head
/// reads [h_g top layer, o_{t-1}].
class MacroGoalNet {
 public:
  MacroGoalNet() = default;
  MacroGoalNet(std::string name, const MacroGoalConfig& config, nn::Rng& rng);

  const MacroGoalConfig& config() const { return config_; }
  ad::Var logits(ad::Tape& tape, const std::vector<ad::Var>& h, const ad::Var& o_prev,
                 const nn::Context& ctx);
  std::vector<ad::Var> update(ad::Tape& tape, const ad::Var& goal_onehot,
                              const ad::Var& o_prev, const std::vector<ad::Var>& h);
  std::vector<ad::Matrix> zero_state(Eigen::Index batch) const {
    return gru_.zero_state(batch);
  }

  void collect(std::vector<ad::Parameter*>& out);
  void collect_buffers(std::vector<nn::Buffer>& out);

 private:
  MacroGoalConfig config_;
  nn::CategoricalMlp head_;
  nn::StackedGru gru_;
};

struct MacroStep {
  Eigen::MatrixXd probs;       // B x cells
  std::vector<int> goal;       // sampled or argmax cell per row
  std::vector<ad::Matrix> h;   // state after consuming the goal
};

/// One evaluation-mode step. With rng == nullptr the argmax is taken.
MacroStep macro_step(MacroGoalNet& net, const std::vector<ad::Matrix>& h,
                     const ad::Matrix& o_prev, nn::Rng* rng);

ad::Matrix one_hot(std::span<const int> labels, int classes);

}  // namespace mapo
