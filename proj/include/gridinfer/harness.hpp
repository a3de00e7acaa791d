#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridinfer/dataset.hpp"
#include "gridinfer/grid.hpp"
#include "gridinfer/ridge.hpp"

namespace gridinfer {

// End-to-end experiment description. The JSON schema is documented in the
// README; seed / output directory / worker count arrive as run arguments
// rather than through the file so one config can drive many seeded runs.
struct ExperimentConfig {
  // dataset source: exactly one of these
  std::string csv_path;
  std::string cache_path;
  bool use_synthesize = false;
  SynthesizeConfig synth;
  bool synthesize_for_network = false;  // size + label the set from the network

  LeaveOutSpec leave_out;
  double alpha = 1e-5;
  std::vector<double> alpha_grid;  // non-empty: grid search overrides alpha
  SplitSpec split;
  double train_subsample = 1.0;

  std::vector<int> m_list;              // sweep-m
  std::vector<double> train_fractions;  // sweep-train-size

  std::string network_path;  // enables the power-flow stage
  double power_factor = 0.95;
  double solver_tolerance = 1e-8;
  int solver_max_iter = 20;
  bool warm_start_series = false;
  bool retry_nonconverged = false;
  int max_flow_timestamps = 50;
  bool oracle_injections = false;

  int histogram_bins = 101;
  int scatter_max_rows = 2000;  // per split, per target

  // run arguments
  std::uint64_t seed = 0;
  std::string out_dir;
  int workers = 1;

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_json_file(const std::string& path);
  nlohmann::json to_json() const;
};

struct RunResult {
  std::vector<std::string> files;  // everything written, manifest last
  nlohmann::json summary;
};

// Dataset resolution shared by every stage (csv / cache / synthesizer).
ObservationSet load_observations(const ExperimentConfig& config);

// Leave-out-top-M experiment: scatter data, per-target NRMSE table,
// serialized model, manifest.
RunResult run_top_m_experiment(const ExperimentConfig& config);

// Same machinery with generator targets and the all-loads feature assembly.
RunResult run_generator_experiment(const ExperimentConfig& config);

// Test NRMSE as a function of the number of left-out targets.
RunResult run_m_sweep(const ExperimentConfig& config);

// Test NRMSE as a function of the training-set fraction, fixed test rows.
RunResult run_train_size_sweep(const ExperimentConfig& config);

// Train, predict held-out loads, solve power flow per test timestamp for
// true and inferred injections, score flow reconstruction.
RunResult run_flow_reconstruction(const ExperimentConfig& config);

// Weight histogram with Gaussian / Lorentzian fits.
RunResult run_weight_analysis(const ExperimentConfig& config);

// Synthesize a dataset to CSV (and optional binary cache).
RunResult run_synthesize(const ExperimentConfig& config,
                         const std::string& csv_out,
                         const std::string& cache_out = "");

// Dispatch by CLI subcommand name: fit | gens | sweep-m | sweep-train-size |
// flows | analyze-weights.
RunResult run_mode(const std::string& mode, const ExperimentConfig& config);

}  // namespace gridinfer
