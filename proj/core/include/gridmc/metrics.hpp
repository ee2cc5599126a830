#pragma once

#include <optional>
#include <vector>

#include "gridmc/types.hpp"

namespace gridmc {

struct Interval {
  double mean = 0.0;
  double half_width = 0.0;
};

struct EstimateReport {
  double mape_magnitude = 0.0;  // percent
  double mae_angle = 0.0;       // degrees
  double rmse = 0.0;            // per-unit, over stacked real and imaginary parts
  int n_runs = 1;
  // Present when n_runs >= 2; means replace the point values above.
  std::optional<Interval> ci_mape;
  std::optional<Interval> ci_angle;
  std::optional<Interval> ci_rmse;
};

EstimateReport evaluate_estimate(const CMatrix& v_est, const CMatrix& v_true);

// Student-t 95% interval: mean +- t_{0.975, n-1} s / sqrt(n).
Interval confidence_interval(const std::vector<double>& samples);

EstimateReport aggregate(const std::vector<EstimateReport>& runs);

// Principal angle difference in degrees, in (-180, 180].
double wrapped_angle_deg(double a_rad, double b_rad);

}  // namespace gridmc
