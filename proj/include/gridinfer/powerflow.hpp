#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "gridinfer/grid.hpp"

namespace gridinfer {

enum class BusRole { Slack, PV, PQ };

// One power-flow problem instance: a network plus per-bus roles and the
// injection snapshot for one timestamp. Roles default from bus kinds:
// loads are PQ, generators are PV, the network's slack bus is Slack.
struct PowerFlowSpec {
  const GridNetwork* net = nullptr;
  std::vector<BusRole> roles;
  Eigen::VectorXd p_set;   // per-unit; ignored at the slack bus
  Eigen::VectorXd q_set;   // per-unit; used at PQ buses
  Eigen::VectorXd v_set;   // used at Slack and PV buses

  void validate() const;
};

// Default spec from the network's own setpoints.
PowerFlowSpec make_spec(const GridNetwork& net);

struct SolveOptions {
  double tolerance = 1e-8;  // max |mismatch|, per-unit
  int max_iter = 20;
  std::optional<PowerFlowState> warm_start;  // flat start when absent
};

struct SolveResult {
  PowerFlowState state;
  int iterations = 0;
  double residual = 0.0;  // final max |mismatch|
  bool converged = false;
  int worst_bus = -1;     // bus with the largest final mismatch
  std::vector<double> residual_history;
};

// Newton-Raphson with an analytic Jacobian in (theta, v) ordering.
// Unknowns: theta at all non-slack buses, v at PQ buses. Throws
// numeric_error on a singular Jacobian; non-convergence is reported via
// the result flags, not an exception.
SolveResult solve_newton_raphson(const PowerFlowSpec& spec,
                                 const SolveOptions& options = {});

struct LineFlowPair {
  int line = 0;
  double p_true = 0.0;
  double p_hat = 0.0;
  double signed_dev = 0.0;   // p_hat - p_true
  double rel_dev = 0.0;      // (p_hat - p_true) / |p_true|; inf if p_true = 0
  bool overloaded_true = false;  // |flow| > 0.95 * thermal_limit
  bool overloaded_hat = false;
};

// Per-line comparison of two solved states on the same network.
std::vector<LineFlowPair> reconstruct_flows(const GridNetwork& net,
                                            const PowerFlowState& solved_true,
                                            const PowerFlowState& solved_hat);

struct FlowMetrics {
  Eigen::VectorXd var_line;    // mean squared true-vs-hat deviation per line
  Eigen::VectorXd sigma2_line; // variance of true flows over time per line
  double m1 = 0.0;  // mean over lines of sqrt(var / sigma^2)
  double m2 = 0.0;  // sqrt of mean over lines of var / sigma^2
  std::vector<int> excluded_lines;  // sigma^2 = 0, left out of both metrics
};

// Aggregate reconstruction-error metrics over a time series of flows.
// Both matrices are N_times x N_lines.
FlowMetrics flow_metrics(const Eigen::MatrixXd& true_series,
                         const Eigen::MatrixXd& hat_series);

}  // namespace gridinfer
