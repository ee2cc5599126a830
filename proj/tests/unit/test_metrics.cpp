#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gridmc/error.hpp"
#include "gridmc/metrics.hpp"
#include "support.hpp"

using namespace gridmc;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

CMatrix feeder_like(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.95, 1.05), ang(-0.1, 0.1);
  CMatrix v(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) v(i, j) = std::polar(mag(rng), ang(rng));
  return v;
}

}  // namespace

TEST(EvaluateEstimate, IdentityIsExact) {
  std::mt19937_64 rng(1);
  const CMatrix v = feeder_like(3, 20, rng);
  const auto r = evaluate_estimate(v, v);
  EXPECT_EQ(r.mape_magnitude, 0.0);
  EXPECT_EQ(r.mae_angle, 0.0);
  EXPECT_EQ(r.rmse, 0.0);
}

TEST(EvaluateEstimate, UniformScaling) {
  std::mt19937_64 rng(2);
  const CMatrix v = feeder_like(3, 20, rng);
  const auto r = evaluate_estimate(1.01 * v, v);
  EXPECT_NEAR(r.mape_magnitude, 1.0, 1e-10);
  EXPECT_NEAR(r.mae_angle, 0.0, 1e-10);
}

TEST(EvaluateEstimate, UniformRotation) {
  std::mt19937_64 rng(3);
  const CMatrix v = feeder_like(2, 15, rng);
  const auto r = evaluate_estimate(v * std::polar(1.0, kDeg), v);
  EXPECT_NEAR(r.mae_angle, 1.0, 1e-10);
  EXPECT_NEAR(r.mape_magnitude, 0.0, 1e-10);
}

TEST(EvaluateEstimate, RmseOverRealAndImaginaryParts) {
  CMatrix t = CMatrix::Constant(1, 2, cplx(1.0, 0.0));
  CMatrix e = t;
  e(0, 0) += cplx(0.3, 0.4);
  EXPECT_NEAR(evaluate_estimate(e, t).rmse, std::sqrt(0.25 / 4.0), 1e-15);
}

TEST(EvaluateEstimate, RejectsMismatchedShapes) {
  EXPECT_THROW(evaluate_estimate(CMatrix::Ones(2, 3), CMatrix::Ones(3, 2)), Error);
}

TEST(WrappedAngle, CrossesTheBranchCut) {
  EXPECT_NEAR(wrapped_angle_deg(179.0 * kDeg, -179.0 * kDeg), -2.0, 1e-10);
  EXPECT_NEAR(wrapped_angle_deg(-179.0 * kDeg, 179.0 * kDeg), 2.0, 1e-10);
  EXPECT_NEAR(wrapped_angle_deg(0.0, std::numbers::pi), 180.0, 1e-10);
}

TEST(EvaluateEstimate, AngleErrorUsesWrappedDifference) {
  CMatrix t(1, 1), e(1, 1);
  t(0, 0) = std::polar(1.0, 179.0 * kDeg);
  e(0, 0) = std::polar(1.0, -179.0 * kDeg);
  EXPECT_NEAR(evaluate_estimate(e, t).mae_angle, 2.0, 1e-9);
}

TEST(ConfidenceInterval, EqualSamplesHaveZeroWidth) {
  const auto ci = confidence_interval({2.5, 2.5, 2.5, 2.5});
  EXPECT_EQ(ci.mean, 2.5);
  EXPECT_EQ(ci.half_width, 0.0);
}

TEST(ConfidenceInterval, TwoSamples) {
  const auto ci = confidence_interval({0.0, 2.0});
  EXPECT_EQ(ci.mean, 1.0);
  // t_{0.975,1} * sqrt(2) / sqrt(2)
  EXPECT_NEAR(ci.half_width, 12.706204736, 1e-6);
}

TEST(ConfidenceInterval, NeedsTwoSamples) { EXPECT_THROW(confidence_interval({1.0}), Error); }

TEST(ConfidenceInterval, CoverageNearNominal) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(3.0, 2.0);
  int covered = 0;
  const int trials = 1000;
  for (int k = 0; k < trials; ++k) {
    std::vector<double> s(20);
    for (auto& x : s) x = normal(rng);
    const auto ci = confidence_interval(s);
    covered += std::abs(ci.mean - 3.0) <= ci.half_width;
  }
  EXPECT_GE(covered, 930);
  EXPECT_LE(covered, 970);
}

TEST(Aggregate, MeansAndIntervals) {
  EstimateReport a, b;
  a.mape_magnitude = 1.0;
  b.mape_magnitude = 3.0;
  a.mae_angle = 0.5;
  b.mae_angle = 0.5;
  a.rmse = 0.01;
  b.rmse = 0.03;
  const auto r = aggregate({a, b});
  EXPECT_EQ(r.n_runs, 2);
  ASSERT_TRUE(r.ci_mape.has_value());
  EXPECT_DOUBLE_EQ(r.mape_magnitude, 2.0);
  EXPECT_DOUBLE_EQ(r.ci_mape->mean, 2.0);
  EXPECT_EQ(r.ci_angle->half_width, 0.0);
  const auto single = aggregate({a});
  EXPECT_EQ(single.n_runs, 1);
  EXPECT_FALSE(single.ci_mape.has_value());
}
