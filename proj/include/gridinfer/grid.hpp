#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gridinfer/error.hpp"

namespace gridinfer {

enum class BusKind { Slack, Generator, Load };

struct Bus {
  int id = 0;                 // stable external label
  BusKind kind = BusKind::Load;
  double p_set = 0.0;         // per-unit on base_mva
  double q_set = 0.0;
  double v_set = 1.0;         // meaningful for Slack / Generator buses
};

struct Line {
  int from = 0;
  int to = 0;
  double g = 0.0;             // series conductance magnitude, per-unit
  double b = 0.0;             // series susceptance magnitude, per-unit
  double thermal_limit = 0.0; // per-unit apparent power; 0 means none
};

struct PowerFlowState {
  Eigen::VectorXd v;      // voltage magnitudes, per-unit
  Eigen::VectorXd theta;  // voltage angles, radians
};

// Build the bus conductance / susceptance matrices from line records.
// Lines store positive-magnitude series parameters g, b. For a line (i,j):
//   G_ij = -g,        G_ii += g
//   B_ij = +b,        B_ii -= b
// i.e. the standard bus-admittance convention for inductive series branches,
// with no shunt, charging, or tap terms. The line's physical series
// susceptance is -b.
// Throws on duplicate line records or a disconnected graph.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> build_admittance(
    const std::vector<Bus>& buses, const std::vector<Line>& lines);

// Immutable network model: buses, lines, admittance matrices, degrees.
class GridNetwork {
 public:
  GridNetwork(std::vector<Bus> buses, std::vector<Line> lines,
              double base_mva = 100.0);

  static GridNetwork from_json_file(const std::string& path);
  static GridNetwork from_json_text(const std::string& text);
  void to_json_file(const std::string& path) const;

  int bus_count() const { return static_cast<int>(buses_.size()); }
  int line_count() const { return static_cast<int>(lines_.size()); }
  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Line>& lines() const { return lines_; }
  const Eigen::MatrixXd& conductance() const { return g_; }
  const Eigen::MatrixXd& susceptance() const { return b_; }
  double base_mva() const { return base_mva_; }
  const std::vector<int>& connectivity() const { return degree_; }

  // internal (dense) index of a bus label; throws on unknown label
  int bus_index(int id) const;
  // line indices incident to internal bus index i
  const std::vector<int>& incident_lines(int i) const { return incident_[i]; }
  // slack bus, internal index: the declared Slack bus, else the generator
  // with the largest p_set
  int slack_index() const { return slack_; }

 private:
  std::vector<Bus> buses_;
  std::vector<Line> lines_;   // endpoints remapped to internal indices
  Eigen::MatrixXd g_, b_;
  double base_mva_;
  std::vector<int> degree_;
  std::vector<std::vector<int>> incident_;
  std::vector<int> id_of_;    // internal index -> external id
  int slack_ = -1;
};

struct Injections {
  Eigen::VectorXd p;
  Eigen::VectorXd q;
};

// Evaluate the power-flow equations at a voltage state:
//   p_i = sum_j v_i v_j [G_ij cos(th_i - th_j) + B_ij sin(th_i - th_j)]
//   q_i = sum_j v_i v_j [G_ij sin(th_i - th_j) - B_ij cos(th_i - th_j)]
Injections injections(const GridNetwork& net, const PowerFlowState& state);

// Active / reactive flow on line k, measured at its `from` end:
// the (i,j) summand of the injection equations.
std::pair<double, double> line_flow(const GridNetwork& net,
                                    const PowerFlowState& state, int line_index);

struct LinearizedDeviation {
  Eigen::VectorXd line_delta;  // per line, at the from end
  Eigen::VectorXd bus_delta;   // per bus: sum of incident directed deltas
  Eigen::VectorXd bus_mean;    // bus_delta / degree
  // fluctuating part per (bus, incident line), aligned with
  // GridNetwork::incident_lines(i); rows sum to zero per bus
  std::vector<std::vector<double>> bus_fluct;
};

// First-order flow deviations for small angle perturbations around a base
// state: dp_ij = B_ij v_i v_j cos(th_i - th_j) (dth_i - dth_j).
LinearizedDeviation linearized_flow_deviation(const GridNetwork& net,
                                              const PowerFlowState& base,
                                              const Eigen::VectorXd& delta_theta);

}  // namespace gridinfer
