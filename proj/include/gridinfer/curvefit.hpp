#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "gridinfer/error.hpp"

namespace gridinfer {

struct RidgeModel;

struct Histogram {
  Eigen::VectorXd centers;
  Eigen::VectorXd counts;
  double bin_width = 0.0;
};

// Symmetric-range histogram covering the given central quantile mass of
// the samples (default 99.5%).
Histogram histogram_symmetric(std::span<const double> values, int bin_count,
                              double coverage = 0.995);

// Peak models fitted to histogram counts:
//   gaussian:   a * exp(-(x - x0)^2 / w^2)
//   lorentzian: a * w^2 / (w^2 + (x - x0)^2)
enum class PeakFamily { Gaussian, Lorentzian };

struct PeakFit {
  double amplitude = 0.0;
  double center = 0.0;
  double width = 0.0;  // sigma for Gaussian, gamma for Lorentzian
  double chi2_reduced = 0.0;
  bool converged = false;
};

// Damped (Levenberg-Marquardt) least squares on the non-empty bins, with
// per-bin variance equal to the bin count. Deterministic fixed initial
// guesses: a = max count, x0 = count-weighted mean, width = weighted std.
// chi2_reduced = chi2 / (non-empty bins - 3). Throws if fewer than 4
// non-empty bins.
PeakFit fit_peak(const Histogram& hist, PeakFamily family);

struct WeightHistogramFit {
  Histogram hist;
  PeakFit gaussian;
  PeakFit lorentzian;
  PeakFamily selected = PeakFamily::Gaussian;  // chi2_r closest to 1
};

// Histogram of the model's weight entries (bias row excluded, all target
// columns pooled) with both peak fits.
WeightHistogramFit analyze_weights(const RidgeModel& model,
                                   int bin_count = 101);

}  // namespace gridinfer
