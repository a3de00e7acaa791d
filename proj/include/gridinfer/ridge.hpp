#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "gridinfer/dataset.hpp"

namespace gridinfer {

struct TrainStats {
  Eigen::VectorXd mean;    // per target, over training rows
  Eigen::VectorXd stddev;  // sample standard deviation (N-1)
};

struct RidgeModel {
  Eigen::MatrixXd W;  // (F+1) x T, last row holds the bias terms
  double alpha = 0.0;
  std::vector<std::string> feature_labels;
  std::vector<std::string> target_labels;
  TrainStats train_stats;
};

struct FitReport {
  Eigen::VectorXd nrmse_train;
  Eigen::VectorXd nrmse_test;
  double alpha_used = 0.0;
  double sigma_min = 0.0;  // extreme singular values of the training matrix
  double sigma_max = 0.0;
};

// Ridge solution W = V diag(s / (s^2 + alpha)) U^T Y via SVD of the
// training matrix. The bias column is regularized like every other
// column. Degenerate (constant) training targets are rejected because
// the NRMSE normalization needs a positive standard deviation.
RidgeModel fit(const RegressionProblem& problem, double alpha);

Eigen::MatrixXd predict(const RidgeModel& model, const Eigen::MatrixXd& x_rows);

// Per-column root-mean-square error divided by the training standard
// deviation.
Eigen::VectorXd nrmse(const Eigen::MatrixXd& y_true,
                      const Eigen::MatrixXd& y_hat,
                      const Eigen::VectorXd& train_std);

// Train-and-test report for one alpha.
FitReport evaluate(const RidgeModel& model, const RegressionProblem& problem);

// Best alpha by mean test NRMSE, with the full per-alpha reports.
std::pair<double, std::vector<FitReport>> grid_search_alpha(
    const RegressionProblem& problem, const std::vector<double>& alpha_grid);

// Model serialization: JSON metadata next to a raw float64 weight payload.
void save_model(const RidgeModel& model, const std::string& json_path,
                const std::string& weights_path);
RidgeModel load_model(const std::string& json_path);

}  // namespace gridinfer
