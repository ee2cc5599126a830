#include "gridmc/metrics.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "gridmc/error.hpp"

namespace gridmc {

double wrapped_angle_deg(double a_rad, double b_rad) {
  double d = std::remainder(a_rad - b_rad, 2.0 * std::numbers::pi);
  if (d <= -std::numbers::pi) d += 2.0 * std::numbers::pi;
  return d * 180.0 / std::numbers::pi;
}

EstimateReport evaluate_estimate(const CMatrix& v_est, const CMatrix& v_true) {
  if (v_est.rows() != v_true.rows() || v_est.cols() != v_true.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "estimate and truth shapes differ");
  }
  if (v_true.size() == 0) throw Error(ErrorCode::undefined_metric, "empty voltage set");
  double mape = 0.0, mae = 0.0, sq = 0.0;
  for (Index j = 0; j < v_true.cols(); ++j) {
    for (Index i = 0; i < v_true.rows(); ++i) {
      const cplx e = v_est(i, j);
      const cplx t = v_true(i, j);
      const double mag = std::abs(t);
      if (mag == 0.0) throw Error(ErrorCode::undefined_metric, "true voltage magnitude is zero");
      mape += 100.0 * std::abs(std::abs(e) - mag) / mag;
      mae += std::abs(wrapped_angle_deg(std::arg(e), std::arg(t)));
      sq += std::norm(e - t);
    }
  }
  const double n = static_cast<double>(v_true.size());
  EstimateReport r;
  r.mape_magnitude = mape / n;
  r.mae_angle = mae / n;
  r.rmse = std::sqrt(sq / (2.0 * n));
  return r;
}

Interval confidence_interval(const std::vector<double>& samples) {
  if (samples.size() < 2) throw Error(ErrorCode::invalid_argument, "confidence interval needs at least 2 samples");
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double s = std::sqrt(ss / (n - 1.0));
  const boost::math::students_t dist(n - 1.0);
  const double t = boost::math::quantile(dist, 0.975);
  return {mean, t * s / std::sqrt(n)};
}

EstimateReport aggregate(const std::vector<EstimateReport>& runs) {
  if (runs.empty()) throw Error(ErrorCode::invalid_argument, "no runs to aggregate");
  if (runs.size() == 1) return runs.front();
  std::vector<double> mape, angle, rmse;
  for (const auto& r : runs) {
    mape.push_back(r.mape_magnitude);
    angle.push_back(r.mae_angle);
    rmse.push_back(r.rmse);
  }
  EstimateReport out;
  out.n_runs = static_cast<int>(runs.size());
  out.ci_mape = confidence_interval(mape);
  out.ci_angle = confidence_interval(angle);
  out.ci_rmse = confidence_interval(rmse);
  out.mape_magnitude = out.ci_mape->mean;
  out.mae_angle = out.ci_angle->mean;
  out.rmse = out.ci_rmse->mean;
  return out;
}

}  // namespace gridmc
