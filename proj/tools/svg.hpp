// Static SVG figures over rollout CSVs: trajectory overlays, acceleration
// curves and observation-gate charts.
#pragma once

#include <Eigen/Core>

#include <map>
#include <string>
#include <vector>

namespace mapo::cli {

struct StateRow {
  int sample = 0;
  int t = 0;
  int role = 0;
  Eigen::Vector2d pos, vel, acc;
};
using StateTable = std::vector<StateRow>;

struct GateRow {
  int t = 0;
  Eigen::RowVectorXd b;
};

/// sequence_id -> rows of a rollouts.csv or truth.csv file.
std::map<std::string, StateTable> read_state_csv(const std::string& path);
/// sequence_id -> role -> rows of sample 0 of a gates.csv file.
std::map<std::string, std::map<int, std::vector<GateRow>>> read_gate_csv(const std::string& path);

std::string sanitize(const std::string& id);

void write_trajectory_svg(const std::string& path, const StateTable& truth,
                          const StateTable& samples);
void write_acceleration_svg(const std::string& path, const StateTable& truth,
                            const StateTable& samples);
/// Heat map of b over time and slots, plus the plotted values as CSV
/// (t,b0..b{K-1}).
void write_gate_chart(const std::string& svg_path, const std::string& csv_path,
                      const std::vector<GateRow>& rows);

}  // namespace mapo::cli
