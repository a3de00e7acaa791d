#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gridinfer/error.hpp"

namespace gridinfer {

// Time series of bus-level active power. Loads are stored as positive
// magnitudes (loads_are_magnitudes); the power-flow stage applies the
// negative-injection sign convention on export.
struct ObservationSet {
  std::vector<std::string> load_labels;
  std::vector<std::string> gen_labels;
  std::vector<std::int64_t> timestamps;  // discrete observation indices
  Eigen::MatrixXd loads;  // N x M_load, per-unit
  Eigen::MatrixXd gens;   // N x M_gen, per-unit
  bool loads_are_magnitudes = true;

  std::int64_t sample_count() const { return loads.rows(); }
  int load_count() const { return static_cast<int>(loads.cols()); }
  int gen_count() const { return static_cast<int>(gens.cols()); }
};

enum class GenMode {
  Steps,        // independent step-like dispatch profiles
  LoadCoupled,  // generators are fixed linear combinations of the loads
};

struct SynthesizeConfig {
  int n_loads = 163;
  int n_gens = 36;
  std::int64_t n_samples = 17472;  // 2 synthetic years, hourly
  double rho = 0.95;               // pairwise correlation of fluctuations
  double seasonal_daily = 0.4;     // relative daily amplitude
  double seasonal_weekly = 0.2;    // relative weekly amplitude
  double fluct_scale = 0.15;       // relative correlated-fluctuation scale
  double noise_scale = 0.0;        // relative independent measurement noise
  GenMode gen_mode = GenMode::Steps;

  static SynthesizeConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
  void validate() const;
};

// Deterministic synthetic observations: loads follow a shared daily+weekly
// profile scaled per bus plus rho-correlated fluctuations; generators are
// step-like dispatch (or load-coupled for controlled studies). Identical
// (config, seed) yields bit-identical matrices.
ObservationSet synthesize(const SynthesizeConfig& config, std::uint64_t seed);

// CSV: first column `timestamp`, remaining columns `L:<name>` / `G:<name>`.
ObservationSet read_observations_csv(const std::string& path);
void write_observations_csv(const ObservationSet& obs, const std::string& path);

// Compact binary cache: fixed header plus row-major float64 payload.
ObservationSet read_observations_cache(const std::string& path);
void write_observations_cache(const ObservationSet& obs,
                              const std::string& path);

enum class TargetKind { Loads, Generators };
enum class Ranking { ByMeanDemand, ByLabelList };

struct LeaveOutSpec {
  TargetKind target_kind = TargetKind::Loads;
  int m_top = 5;
  Ranking ranking = Ranking::ByMeanDemand;
  std::vector<std::string> explicit_labels;
};

struct RowSplit {
  std::vector<int> train_rows;
  std::vector<int> test_rows;
  std::uint64_t seed = 0;  // seeds the nested sub-sampling order
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool contiguous = false;  // block split instead of uniform random
};

// Disjoint, exhaustive train/test row partition. Uniform without
// replacement by default; seeded and reproducible.
RowSplit make_split(std::int64_t n_rows, const SplitSpec& spec);

// Deterministic nested sub-sampling of the training rows: for the same
// split, the fraction-f subset is a prefix of the fraction-f' subset for
// f < f'. Row count is round(fraction * train size).
std::vector<int> subsample_train_rows(const RowSplit& split, double fraction);

struct ColumnSelection {
  std::vector<std::string> feature_labels;
  std::vector<std::string> target_labels;
};

// Rank targets (ByMeanDemand: by mean absolute power over the training
// rows, descending, ties broken by lower column index) and split columns
// into features and targets. For generator targets the features are all
// loads plus the remaining generators.
ColumnSelection rank_and_split_targets(const ObservationSet& obs,
                                       const LeaveOutSpec& spec,
                                       const std::vector<int>& train_rows);

struct RegressionProblem {
  Eigen::MatrixXd X;  // N x (F+1), last column all ones
  Eigen::MatrixXd Y;  // N x T
  std::vector<std::string> feature_labels;
  std::vector<std::string> target_labels;
  RowSplit split;

  Eigen::MatrixXd train_X() const;
  Eigen::MatrixXd train_Y() const;
  Eigen::MatrixXd test_X() const;
  Eigen::MatrixXd test_Y() const;
};

// Assemble the bias-augmented feature matrix and target matrix, rows in
// timestamp order.
RegressionProblem assemble(const ObservationSet& obs,
                           const ColumnSelection& cols, const RowSplit& split);

}  // namespace gridinfer
