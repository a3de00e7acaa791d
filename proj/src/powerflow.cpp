#include "gridinfer/powerflow.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace gridinfer {

void PowerFlowSpec::validate() const {
  if (!net) throw config_error("power-flow spec has no network");
  const int n = net->bus_count();
  if (static_cast<int>(roles.size()) != n || p_set.size() != n ||
      q_set.size() != n || v_set.size() != n)
    throw config_error("power-flow spec dimensions do not match network");
  int n_slack = 0;
  for (const auto r : roles)
    if (r == BusRole::Slack) ++n_slack;
  if (n_slack != 1)
    throw config_error("power-flow spec must have exactly one slack bus, got " +
                       std::to_string(n_slack));
  for (int i = 0; i < n; ++i) {
    if (roles[i] != BusRole::PQ && v_set[i] <= 0.0)
      throw config_error("non-positive voltage setpoint at bus " +
                         std::to_string(i));
  }
}

PowerFlowSpec make_spec(const GridNetwork& net) {
  const int n = net.bus_count();
  PowerFlowSpec spec;
  spec.net = &net;
  spec.roles.assign(n, BusRole::PQ);
  spec.p_set = Eigen::VectorXd::Zero(n);
  spec.q_set = Eigen::VectorXd::Zero(n);
  spec.v_set = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) {
    const Bus& b = net.buses()[i];
    spec.p_set[i] = b.p_set;
    spec.q_set[i] = b.q_set;
    spec.v_set[i] = b.v_set;
    if (i == net.slack_index())
      spec.roles[i] = BusRole::Slack;
    else if (b.kind == BusKind::Generator || b.kind == BusKind::Slack)
      spec.roles[i] = BusRole::PV;
  }
  return spec;
}

SolveResult solve_newton_raphson(const PowerFlowSpec& spec,
                                 const SolveOptions& options) {
  spec.validate();
  const GridNetwork& net = *spec.net;
  const int n = net.bus_count();

  // unknown layout: theta for all non-slack buses, then v for PQ buses
  std::vector<int> theta_idx, v_idx;
  for (int i = 0; i < n; ++i)
    if (spec.roles[i] != BusRole::Slack) theta_idx.push_back(i);
  for (int i = 0; i < n; ++i)
    if (spec.roles[i] == BusRole::PQ) v_idx.push_back(i);
  const int nt = static_cast<int>(theta_idx.size());
  const int nv = static_cast<int>(v_idx.size());
  const int m = nt + nv;

  SolveResult res;
  if (options.warm_start) {
    res.state = *options.warm_start;
    if (res.state.v.size() != n || res.state.theta.size() != n)
      throw config_error("warm-start state dimension mismatch");
  } else {
    res.state.v = Eigen::VectorXd::Ones(n);
    res.state.theta = Eigen::VectorXd::Zero(n);
  }
  // pin controlled quantities
  for (int i = 0; i < n; ++i) {
    if (spec.roles[i] != BusRole::PQ) res.state.v[i] = spec.v_set[i];
    if (spec.roles[i] == BusRole::Slack) res.state.theta[i] = 0.0;
  }

  const auto& g = net.conductance();
  const auto& b = net.susceptance();

  auto mismatch = [&](const PowerFlowState& st, Eigen::VectorXd& f) {
    const Injections inj = injections(net, st);
    f.resize(m);
    for (int a = 0; a < nt; ++a)
      f[a] = spec.p_set[theta_idx[a]] - inj.p[theta_idx[a]];
    for (int a = 0; a < nv; ++a)
      f[nt + a] = spec.q_set[v_idx[a]] - inj.q[v_idx[a]];
  };

  Eigen::VectorXd f;
  mismatch(res.state, f);
  res.residual = f.size() > 0 ? f.cwiseAbs().maxCoeff() : 0.0;
  res.residual_history.push_back(res.residual);

  for (int it = 0; it < options.max_iter && res.residual > options.tolerance;
       ++it) {
    // analytic Jacobian of (p, q) w.r.t. (theta, v)
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(m, m);
    const auto& v = res.state.v;
    const auto& th = res.state.theta;
    for (int a = 0; a < nt; ++a) {
      const int i = theta_idx[a];
      // dp_i/dtheta
      for (int c = 0; c < nt; ++c) {
        const int j = theta_idx[c];
        if (i == j) {
          double s = 0.0;
          for (int k = 0; k < n; ++k) {
            if (k == i) continue;
            const double d = th[i] - th[k];
            s += v[i] * v[k] * (-g(i, k) * std::sin(d) + b(i, k) * std::cos(d));
          }
          jac(a, c) = s;
        } else {
          const double d = th[i] - th[j];
          jac(a, c) = v[i] * v[j] * (g(i, j) * std::sin(d) - b(i, j) * std::cos(d));
        }
      }
      // dp_i/dv
      for (int c = 0; c < nv; ++c) {
        const int j = v_idx[c];
        if (i == j) {
          double s = 2.0 * v[i] * g(i, i);
          for (int k = 0; k < n; ++k) {
            if (k == i) continue;
            const double d = th[i] - th[k];
            s += v[k] * (g(i, k) * std::cos(d) + b(i, k) * std::sin(d));
          }
          jac(a, nt + c) = s;
        } else {
          const double d = th[i] - th[j];
          jac(a, nt + c) = v[i] * (g(i, j) * std::cos(d) + b(i, j) * std::sin(d));
        }
      }
    }
    for (int a = 0; a < nv; ++a) {
      const int i = v_idx[a];
      // dq_i/dtheta
      for (int c = 0; c < nt; ++c) {
        const int j = theta_idx[c];
        if (i == j) {
          double s = 0.0;
          for (int k = 0; k < n; ++k) {
            if (k == i) continue;
            const double d = th[i] - th[k];
            s += v[i] * v[k] * (g(i, k) * std::cos(d) + b(i, k) * std::sin(d));
          }
          jac(nt + a, c) = s;
        } else {
          const double d = th[i] - th[j];
          jac(nt + a, c) =
              -v[i] * v[j] * (g(i, j) * std::cos(d) + b(i, j) * std::sin(d));
        }
      }
      // dq_i/dv
      for (int c = 0; c < nv; ++c) {
        const int j = v_idx[c];
        if (i == j) {
          double s = -2.0 * v[i] * b(i, i);
          for (int k = 0; k < n; ++k) {
            if (k == i) continue;
            const double d = th[i] - th[k];
            s += v[k] * (g(i, k) * std::sin(d) - b(i, k) * std::cos(d));
          }
          jac(nt + a, nt + c) = s;
        } else {
          const double d = th[i] - th[j];
          jac(nt + a, nt + c) =
              v[i] * (g(i, j) * std::sin(d) - b(i, j) * std::cos(d));
        }
      }
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) {
      throw numeric_error(
          "singular power-flow Jacobian (islanded network or voltage "
          "collapse) at iteration " +
          std::to_string(it));
    }
    const Eigen::VectorXd step = lu.solve(f);
    for (int a = 0; a < nt; ++a) res.state.theta[theta_idx[a]] += step[a];
    for (int a = 0; a < nv; ++a) res.state.v[v_idx[a]] += step[nt + a];
    ++res.iterations;

    mismatch(res.state, f);
    res.residual = f.cwiseAbs().maxCoeff();
    res.residual_history.push_back(res.residual);
    if (!std::isfinite(res.residual)) break;
  }

  res.converged =
      std::isfinite(res.residual) && res.residual <= options.tolerance;
  if (f.size() > 0) {
    int arg = 0;
    f.cwiseAbs().maxCoeff(&arg);
    res.worst_bus = arg < nt ? theta_idx[arg] : v_idx[arg - nt];
  }
  return res;
}

std::vector<LineFlowPair> reconstruct_flows(const GridNetwork& net,
                                            const PowerFlowState& solved_true,
                                            const PowerFlowState& solved_hat) {
  const int n = net.bus_count();
  if (solved_true.v.size() != n || solved_hat.v.size() != n)
    throw config_error("state dimension does not match network");
  std::vector<LineFlowPair> out;
  out.reserve(net.line_count());
  for (int k = 0; k < net.line_count(); ++k) {
    LineFlowPair lf;
    lf.line = k;
    lf.p_true = line_flow(net, solved_true, k).first;
    lf.p_hat = line_flow(net, solved_hat, k).first;
    lf.signed_dev = lf.p_hat - lf.p_true;
    lf.rel_dev = lf.p_true != 0.0
                     ? lf.signed_dev / std::abs(lf.p_true)
                     : (lf.signed_dev == 0.0
                            ? 0.0
                            : std::numeric_limits<double>::infinity());
    const double limit = net.lines()[k].thermal_limit;
    if (limit > 0.0) {
      lf.overloaded_true = std::abs(lf.p_true) > 0.95 * limit;
      lf.overloaded_hat = std::abs(lf.p_hat) > 0.95 * limit;
    }
    out.push_back(lf);
  }
  return out;
}

FlowMetrics flow_metrics(const Eigen::MatrixXd& true_series,
                         const Eigen::MatrixXd& hat_series) {
  if (true_series.rows() != hat_series.rows() ||
      true_series.cols() != hat_series.cols())
    throw config_error("flow series shapes differ");
  const auto n = true_series.rows();
  const auto e = true_series.cols();
  if (n < 1) throw config_error("flow series is empty");

  FlowMetrics out;
  out.var_line = Eigen::VectorXd::Zero(e);
  out.sigma2_line = Eigen::VectorXd::Zero(e);
  double sum_ratio_sqrt = 0.0;
  double sum_ratio = 0.0;
  int kept = 0;
  for (Eigen::Index k = 0; k < e; ++k) {
    const double mean_true = true_series.col(k).mean();
    const double sigma2 =
        (true_series.col(k).array() - mean_true).square().mean();
    const double var =
        (true_series.col(k) - hat_series.col(k)).array().square().mean();
    out.sigma2_line[k] = sigma2;
    out.var_line[k] = var;
    if (sigma2 <= 0.0) {
      out.excluded_lines.push_back(static_cast<int>(k));
      continue;
    }
    sum_ratio_sqrt += std::sqrt(var / sigma2);
    sum_ratio += var / sigma2;
    ++kept;
  }
  if (kept == 0) throw numeric_error("all lines have constant true flow");
  out.m1 = sum_ratio_sqrt / kept;
  out.m2 = std::sqrt(sum_ratio / kept);
  return out;
}

}  // namespace gridinfer
