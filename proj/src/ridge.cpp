#include "gridinfer/ridge.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace gridinfer {

RidgeModel fit(const RegressionProblem& problem, double alpha) {
  if (alpha < 0.0) throw config_error("alpha must be >= 0");
  const Eigen::MatrixXd x = problem.train_X();
  const Eigen::MatrixXd y = problem.train_Y();
  if (x.rows() < 1) throw config_error("empty training set");
  if (!x.allFinite() || !y.allFinite())
    throw config_error("non-finite values in training data");

  RidgeModel model;
  model.alpha = alpha;
  model.feature_labels = problem.feature_labels;
  model.target_labels = problem.target_labels;

  model.train_stats.mean = y.colwise().mean();
  model.train_stats.stddev.resize(y.cols());
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    const double m = model.train_stats.mean[c];
    const double denom = y.rows() > 1 ? static_cast<double>(y.rows() - 1) : 1.0;
    const double sd = std::sqrt((y.col(c).array() - m).square().sum() / denom);
    if (sd <= 0.0)
      throw config_error("training target " + std::to_string(c) +
                         " is constant; NRMSE normalization undefined");
    model.train_stats.stddev[c] = sd;
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  Eigen::VectorXd filter(s.size());
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    const double denom = s[k] * s[k] + alpha;
    // with alpha = 0 this is the pseudoinverse path; drop tiny singular
    // values to avoid noise blow-up
    filter[k] = denom > 0.0 && s[k] > s[0] * 1e-14 ? s[k] / denom : 0.0;
  }
  model.W = svd.matrixV() * filter.asDiagonal() * (svd.matrixU().transpose() * y);
  if (!model.W.allFinite()) throw numeric_error("ridge solution is not finite");
  return model;
}

Eigen::MatrixXd predict(const RidgeModel& model,
                        const Eigen::MatrixXd& x_rows) {
  if (x_rows.cols() != model.W.rows())
    throw config_error("feature count mismatch: got " +
                       std::to_string(x_rows.cols()) + ", model expects " +
                       std::to_string(model.W.rows()));
  return x_rows * model.W;
}

Eigen::VectorXd nrmse(const Eigen::MatrixXd& y_true,
                      const Eigen::MatrixXd& y_hat,
                      const Eigen::VectorXd& train_std) {
  if (y_true.rows() != y_hat.rows() || y_true.cols() != y_hat.cols() ||
      y_true.cols() != train_std.size())
    throw config_error("nrmse shape mismatch");
  Eigen::VectorXd out(y_true.cols());
  for (Eigen::Index c = 0; c < y_true.cols(); ++c) {
    if (train_std[c] <= 0.0) throw config_error("train_std must be positive");
    const double mse = (y_true.col(c) - y_hat.col(c)).array().square().mean();
    out[c] = std::sqrt(mse) / train_std[c];
  }
  return out;
}

FitReport evaluate(const RidgeModel& model, const RegressionProblem& problem) {
  FitReport report;
  report.alpha_used = model.alpha;
  const Eigen::MatrixXd xtr = problem.train_X();
  report.nrmse_train =
      nrmse(problem.train_Y(), predict(model, xtr), model.train_stats.stddev);
  if (!problem.split.test_rows.empty())
    report.nrmse_test = nrmse(problem.test_Y(), predict(model, problem.test_X()),
                              model.train_stats.stddev);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(xtr);
  report.sigma_max = svd.singularValues()[0];
  report.sigma_min = svd.singularValues()[svd.singularValues().size() - 1];
  return report;
}

std::pair<double, std::vector<FitReport>> grid_search_alpha(
    const RegressionProblem& problem, const std::vector<double>& alpha_grid) {
  if (alpha_grid.empty()) throw config_error("alpha grid is empty");
  std::vector<FitReport> reports;
  double best_alpha = alpha_grid.front();
  double best_score = std::numeric_limits<double>::infinity();
  for (double alpha : alpha_grid) {
    const RidgeModel model = fit(problem, alpha);
    FitReport report = evaluate(model, problem);
    const double score = report.nrmse_test.size() > 0
                             ? report.nrmse_test.mean()
                             : report.nrmse_train.mean();
    if (score < best_score) {
      best_score = score;
      best_alpha = alpha;
    }
    reports.push_back(std::move(report));
  }
  return {best_alpha, reports};
}

void save_model(const RidgeModel& model, const std::string& json_path,
                const std::string& weights_path) {
  nlohmann::json j = {
      {"alpha", model.alpha},
      {"feature_labels", model.feature_labels},
      {"target_labels", model.target_labels},
      {"train_mean", std::vector<double>(model.train_stats.mean.begin(),
                                         model.train_stats.mean.end())},
      {"train_std", std::vector<double>(model.train_stats.stddev.begin(),
                                        model.train_stats.stddev.end())},
      {"rows", model.W.rows()},
      {"cols", model.W.cols()},
      // stored as a bare filename so reports relocate cleanly; resolved
      // relative to the JSON file on load
      {"weights_file",
       std::filesystem::path(weights_path).filename().string()},
  };
  std::ofstream out(json_path);
  if (!out) throw config_error("cannot write '" + json_path + "'");
  out << j.dump(2) << '\n';
  std::ofstream wout(weights_path, std::ios::binary);
  if (!wout) throw config_error("cannot write '" + weights_path + "'");
  // row-major float64
  for (Eigen::Index r = 0; r < model.W.rows(); ++r)
    for (Eigen::Index c = 0; c < model.W.cols(); ++c) {
      const double v = model.W(r, c);
      wout.write(reinterpret_cast<const char*>(&v), 8);
    }
}

RidgeModel load_model(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw config_error("cannot open '" + json_path + "'");
  nlohmann::json j;
  try {
    in >> j;
    RidgeModel model;
    model.alpha = j.at("alpha").get<double>();
    model.feature_labels = j.at("feature_labels").get<std::vector<std::string>>();
    model.target_labels = j.at("target_labels").get<std::vector<std::string>>();
    const auto mean = j.at("train_mean").get<std::vector<double>>();
    const auto sd = j.at("train_std").get<std::vector<double>>();
    model.train_stats.mean =
        Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size());
    model.train_stats.stddev =
        Eigen::Map<const Eigen::VectorXd>(sd.data(), sd.size());
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    std::filesystem::path wpath = j.at("weights_file").get<std::string>();
    if (wpath.is_relative())
      wpath = std::filesystem::path(json_path).parent_path() / wpath;
    std::ifstream win(wpath, std::ios::binary);
    if (!win)
      throw config_error("cannot open weights file '" + wpath.string() + "'");
    model.W.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        win.read(reinterpret_cast<char*>(&model.W(r, c)), 8);
    if (!win)
      throw config_error("truncated weights file '" + wpath.string() + "'");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("model file schema error: ") + e.what());
  }
}

}  // namespace gridinfer
