#include "gridinfer.h"

#include <cstring>
#include <string>

#include "gridinfer/error.hpp"
#include "gridinfer/harness.hpp"
#include "gridinfer/powerflow.hpp"

namespace {

thread_local std::string g_last_error = "no error";

gi_status fail(const gridinfer::Error& e) {
  g_last_error = e.what();
  return e.code() == gridinfer::ErrorCode::Numeric ? GI_ERR_NUMERIC
                                                   : GI_ERR_CONFIG;
}

gi_status fail_other(const std::exception& e) {
  g_last_error = e.what();
  return GI_ERR_NUMERIC;
}

template <typename Fn>
gi_status guarded(Fn&& fn) {
  try {
    fn();
    return GI_OK;
  } catch (const gridinfer::Error& e) {
    return fail(e);
  } catch (const std::exception& e) {
    return fail_other(e);
  }
}

}  // namespace

struct gi_network {
  gridinfer::GridNetwork net;
};

extern "C" {

const char* gi_version(void) { return "0.1.0"; }

const char* gi_last_error(void) { return g_last_error.c_str(); }

gi_status gi_run(const char* mode, const char* config_json,
                 const char* out_dir, uint64_t seed, int workers) {
  return guarded([&] {
    if (!mode || !config_json || !out_dir)
      throw gridinfer::config_error("gi_run: null argument");
    gridinfer::ExperimentConfig config =
        gridinfer::ExperimentConfig::from_json_text(config_json);
    config.seed = seed;
    config.out_dir = out_dir;
    config.workers = workers > 0 ? workers : 1;
    gridinfer::run_mode(mode, config);
  });
}

gi_status gi_synthesize(const char* config_json, uint64_t seed,
                        const char* csv_out, const char* cache_out) {
  return guarded([&] {
    if (!config_json || !csv_out)
      throw gridinfer::config_error("gi_synthesize: null argument");
    gridinfer::ExperimentConfig config =
        gridinfer::ExperimentConfig::from_json_text(config_json);
    config.seed = seed;
    gridinfer::run_synthesize(config, csv_out,
                              cache_out ? cache_out : std::string());
  });
}

gi_status gi_network_open(const char* path, gi_network** out) {
  return guarded([&] {
    if (!path || !out)
      throw gridinfer::config_error("gi_network_open: null argument");
    *out = new gi_network{gridinfer::GridNetwork::from_json_file(path)};
  });
}

void gi_network_close(gi_network* net) { delete net; }

int gi_network_bus_count(const gi_network* net) {
  return net ? net->net.bus_count() : 0;
}

int gi_network_line_count(const gi_network* net) {
  return net ? net->net.line_count() : 0;
}

gi_status gi_network_solve(const gi_network* net, const double* p_set,
                           const double* q_set, double tolerance, int max_iter,
                           double* v_out, double* theta_out,
                           int* iterations_out) {
  return guarded([&] {
    if (!net || !p_set || !q_set || !v_out || !theta_out)
      throw gridinfer::config_error("gi_network_solve: null argument");
    const int n = net->net.bus_count();
    gridinfer::PowerFlowSpec spec = gridinfer::make_spec(net->net);
    for (int i = 0; i < n; ++i) {
      spec.p_set[i] = p_set[i];
      spec.q_set[i] = q_set[i];
    }
    gridinfer::SolveOptions opts;
    if (tolerance > 0.0) opts.tolerance = tolerance;
    if (max_iter > 0) opts.max_iter = max_iter;
    const gridinfer::SolveResult res =
        gridinfer::solve_newton_raphson(spec, opts);
    if (!res.converged)
      throw gridinfer::numeric_error(
          "power flow did not converge: residual " +
          std::to_string(res.residual) + " after " +
          std::to_string(res.iterations) + " iterations (worst bus " +
          std::to_string(res.worst_bus) + ")");
    for (int i = 0; i < n; ++i) {
      v_out[i] = res.state.v[i];
      theta_out[i] = res.state.theta[i];
    }
    if (iterations_out) *iterations_out = res.iterations;
  });
}

}  // extern "C"
