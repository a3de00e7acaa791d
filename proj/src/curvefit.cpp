#include "gridinfer/curvefit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gridinfer/ridge.hpp"

namespace gridinfer {

Histogram histogram_symmetric(std::span<const double> values, int bin_count,
                              double coverage) {
  if (bin_count < 4) throw config_error("bin_count must be >= 4");
  if (values.empty()) throw config_error("no values to histogram");
  if (coverage <= 0.0 || coverage > 1.0)
    throw config_error("coverage must be in (0, 1]");

  std::vector<double> mag(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) mag[i] = std::abs(values[i]);
  std::sort(mag.begin(), mag.end());
  const std::size_t idx = std::min(
      mag.size() - 1,
      static_cast<std::size_t>(std::floor(coverage * (mag.size() - 1))));
  const double half_range = mag[idx];
  if (half_range <= 0.0)
    throw config_error("degenerate histogram: all values identical");

  Histogram h;
  h.bin_width = 2.0 * half_range / bin_count;
  h.centers.resize(bin_count);
  h.counts = Eigen::VectorXd::Zero(bin_count);
  for (int k = 0; k < bin_count; ++k)
    h.centers[k] = -half_range + (k + 0.5) * h.bin_width;
  for (double v : values) {
    if (v < -half_range || v >= half_range) continue;
    const int k = std::min(bin_count - 1,
                           static_cast<int>((v + half_range) / h.bin_width));
    h.counts[k] += 1.0;
  }
  return h;
}

namespace {

struct ModelEval {
  double f;
  double da, dx0, dw;
};

ModelEval eval_gaussian(double x, double a, double x0, double w) {
  const double u = (x - x0) / w;
  const double e = std::exp(-u * u);
  ModelEval m;
  m.f = a * e;
  m.da = e;
  m.dx0 = a * e * 2.0 * u / w;
  m.dw = a * e * 2.0 * u * u / w;
  return m;
}

ModelEval eval_lorentzian(double x, double a, double x0, double w) {
  const double d = x - x0;
  const double denom = w * w + d * d;
  ModelEval m;
  m.f = a * w * w / denom;
  m.da = w * w / denom;
  m.dx0 = a * w * w * 2.0 * d / (denom * denom);
  m.dw = a * 2.0 * w * d * d / (denom * denom);
  return m;
}

}  // namespace

PeakFit fit_peak(const Histogram& hist, PeakFamily family) {
  // only non-empty bins enter the fit; per-bin variance is the count
  std::vector<double> xs, ns;
  for (Eigen::Index k = 0; k < hist.counts.size(); ++k) {
    if (hist.counts[k] > 0.0) {
      xs.push_back(hist.centers[k]);
      ns.push_back(hist.counts[k]);
    }
  }
  const int nb = static_cast<int>(xs.size());
  if (nb < 4)
    throw config_error("peak fit needs at least 4 non-empty bins, got " +
                       std::to_string(nb));

  // fixed initial guesses: max bin, weighted mean, weighted std
  double total = 0.0, wx = 0.0;
  double amax = 0.0;
  for (int k = 0; k < nb; ++k) {
    total += ns[k];
    wx += ns[k] * xs[k];
    amax = std::max(amax, ns[k]);
  }
  const double mean0 = wx / total;
  double wvar = 0.0;
  for (int k = 0; k < nb; ++k)
    wvar += ns[k] * (xs[k] - mean0) * (xs[k] - mean0);
  double width0 = std::sqrt(wvar / total);
  if (width0 <= 0.0) width0 = hist.bin_width;

  auto chi2_of = [&](double a, double x0, double w) {
    double chi2 = 0.0;
    for (int k = 0; k < nb; ++k) {
      const double f = family == PeakFamily::Gaussian
                           ? eval_gaussian(xs[k], a, x0, w).f
                           : eval_lorentzian(xs[k], a, x0, w).f;
      const double r = ns[k] - f;
      chi2 += r * r / ns[k];
    }
    return chi2;
  };

  // heavy-tailed samples give a weighted std far above the peak width, so
  // try a fixed ladder of width starts and keep the best result
  const double width_starts[] = {width0, 0.3 * width0, 0.1 * width0,
                                 3.0 * width0};
  PeakFit best;
  double best_chi2 = std::numeric_limits<double>::infinity();

  for (double wstart : width_starts) {
    double a = amax, x0 = mean0, w = wstart;
    double lambda = 1e-3;
    double chi2 = chi2_of(a, x0, w);
    bool moved = false;
    for (int iter = 0; iter < 200; ++iter) {
      Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
      Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
      for (int k = 0; k < nb; ++k) {
        const ModelEval m = family == PeakFamily::Gaussian
                                ? eval_gaussian(xs[k], a, x0, w)
                                : eval_lorentzian(xs[k], a, x0, w);
        const double inv_var = 1.0 / ns[k];
        const Eigen::Vector3d grad(m.da, m.dx0, m.dw);
        jtj += inv_var * grad * grad.transpose();
        jtr += inv_var * (ns[k] - m.f) * grad;
      }
      Eigen::Matrix3d damped = jtj;
      for (int d = 0; d < 3; ++d) damped(d, d) *= 1.0 + lambda;
      const Eigen::Vector3d step = damped.ldlt().solve(jtr);
      if (!step.allFinite()) break;
      const double a2 = a + step[0], x02 = x0 + step[1], w2 = w + step[2];
      if (w2 <= 0.0 || a2 <= 0.0) {
        lambda *= 10.0;
        if (lambda > 1e12) break;
        continue;
      }
      const double chi2_new = chi2_of(a2, x02, w2);
      if (chi2_new < chi2) {
        const double rel = (chi2 - chi2_new) / std::max(chi2, 1e-300);
        a = a2;
        x0 = x02;
        w = w2;
        chi2 = chi2_new;
        lambda = std::max(lambda * 0.3, 1e-12);
        moved = true;
        if (rel < 1e-12) break;
      } else {
        lambda *= 10.0;
        if (lambda > 1e12) break;
      }
    }
    if (chi2 < best_chi2) {
      best_chi2 = chi2;
      best.amplitude = a;
      best.center = x0;
      best.width = std::abs(w);
      best.converged = moved;
    }
  }
  best.chi2_reduced = best_chi2 / (nb - 3);
  return best;
}

WeightHistogramFit analyze_weights(const RidgeModel& model, int bin_count) {
  if (model.W.rows() < 2) throw config_error("model has no feature weights");
  // bias row excluded, all target columns pooled
  std::vector<double> weights;
  weights.reserve((model.W.rows() - 1) * model.W.cols());
  for (Eigen::Index r = 0; r + 1 < model.W.rows(); ++r)
    for (Eigen::Index c = 0; c < model.W.cols(); ++c)
      weights.push_back(model.W(r, c));

  WeightHistogramFit out;
  out.hist = histogram_symmetric(weights, bin_count);
  out.gaussian = fit_peak(out.hist, PeakFamily::Gaussian);
  out.lorentzian = fit_peak(out.hist, PeakFamily::Lorentzian);
  out.selected = std::abs(out.gaussian.chi2_reduced - 1.0) <=
                         std::abs(out.lorentzian.chi2_reduced - 1.0)
                     ? PeakFamily::Gaussian
                     : PeakFamily::Lorentzian;
  return out;
}

}  // namespace gridinfer
