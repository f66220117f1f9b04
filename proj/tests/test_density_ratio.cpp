#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "covshift/density_ratio.hpp"
#include "covshift/regression.hpp"
#include "covshift/synthetic.hpp"

using namespace covshift;

namespace {

Matrix gaussian_sample(int n, double mean, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(mean, 1.0);
  Matrix x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = g(rng);
  return x;
}

Matrix grid(double lo, double hi, int points) {
  Matrix x(points, 1);
  for (int i = 0; i < points; ++i) x(i, 0) = lo + (hi - lo) * i / (points - 1);
  return x;
}

// Root mean squared error against exp(x/2 - 1/8), the ratio N(0.5,1)/N(0,1),
// averaged over a grid on [-2, 2].
double shifted_ratio_error(const RatioModel& model) {
  const Matrix g = grid(-2.0, 2.0, 81);
  const Vector r = model.predict(g);
  double ss = 0.0;
  for (int i = 0; i < g.rows(); ++i) {
    const double truth = std::exp(g(i, 0) / 2.0 - 0.125);
    ss += (r[i] - truth) * (r[i] - truth);
  }
  return std::sqrt(ss / static_cast<double>(g.rows()));
}

}  // namespace

TEST(Kulsif, IdenticalDistributionsGiveUnitRatio) {
  const KulsifModel m = fit_kulsif(gaussian_sample(1000, 0.0, 1), gaussian_sample(1000, 0.0, 2));
  const Vector r = m.predict(grid(-2.0, 2.0, 81));
  EXPECT_LT((r.array() - 1.0).abs().mean(), 0.1);
}

TEST(Kulsif, TrainingPointsNearOne) {
  const Matrix h = gaussian_sample(1000, 0.0, 3);
  const KulsifModel m = fit_kulsif(h, gaussian_sample(1000, 0.0, 4));
  const Vector r = m.predict(h);
  int inside = 0;
  for (Eigen::Index i = 0; i < r.size(); ++i) inside += (r[i] >= 0.5 && r[i] <= 1.5);
  EXPECT_GE(inside, static_cast<int>(0.95 * r.size()));
}

TEST(Kulsif, HugeRidgeGivesZero) {
  KulsifOptions o;
  o.ridge = 1e8;
  const KulsifModel m = fit_kulsif(gaussian_sample(200, 0.0, 5), gaussian_sample(200, 0.5, 6), o);
  EXPECT_LT(m.predict(grid(-3.0, 3.0, 31)).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Kulsif, PredictionClipped) {
  Matrix c(1, 1);
  c << 0.0;
  Vector coef(1);
  coef << 12.0;
  const KulsifModel m(c, coef, 1, 1.0, 0.1, 5.0);
  EXPECT_DOUBLE_EQ(m.predict_raw(c)[0], 12.0);
  EXPECT_DOUBLE_EQ(m.predict(c)[0], 5.0);
}

TEST(Kulsif, ShiftErrorDecreasesWithSampleSize) {
  std::vector<double> err;
  for (int n : {100, 400, 1600}) {
    double total = 0.0;
    for (std::uint64_t s = 0; s < 3; ++s) {
      const KulsifModel m =
          fit_kulsif(gaussian_sample(n, 0.0, 100 + s), gaussian_sample(n, 0.5, 200 + s));
      total += shifted_ratio_error(m);
    }
    err.push_back(total / 3.0);
  }
  EXPECT_GT(err[0], err[1]);
  EXPECT_GT(err[1], err[2]);
}

TEST(KulsifProperty, ObjectiveNotAboveZeroFunction) {
  const KulsifModel m = fit_kulsif(gaussian_sample(150, 0.0, 7), gaussian_sample(120, 0.7, 8));
  EXPECT_LE(m.objective(), 0.0);
  EXPECT_NEAR(m.objective(Vector::Zero(m.coefficients().size())), 0.0, 1e-15);
}

TEST(KulsifProperty, FittedCoefficientsAreLocalMinimum) {
  const KulsifModel m = fit_kulsif(gaussian_sample(150, 0.0, 9), gaussian_sample(120, 0.7, 10));
  const double best = m.objective();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    Vector dir(m.coefficients().size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = g(rng);
    dir *= 1e-4 / dir.norm();
    EXPECT_GE(m.objective(m.coefficients() + dir), best - 1e-15);
    EXPECT_GE(m.objective(m.coefficients() - dir), best - 1e-15);
  }
}

TEST(Kulsif, InvalidInputs) {
  EXPECT_THROW(fit_kulsif(Matrix(0, 1), gaussian_sample(5, 0.0, 1)), ValidationError);
  EXPECT_THROW(fit_kulsif(gaussian_sample(5, 0.0, 1), Matrix::Zero(5, 2)), ValidationError);
}

TEST(Kulsif, IllConditionedSolveReportsCondition) {
  KulsifOptions o;
  o.ridge = 1e-300;
  o.bandwidth = 1e3;
  try {
    fit_kulsif(gaussian_sample(50, 0.0, 1), gaussian_sample(50, 0.0, 2), o);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("condition"), std::string::npos);
  }
}

TEST(Kde, SinglePointPeak) {
  for (int d : {1, 2}) {
    const double h = 0.7;
    Matrix x = Matrix::Zero(1, d);
    const KdeModel m = fit_kde(x, h);
    const double expect = std::pow(h, -d) * std::pow(2.0 * std::numbers::pi, -d / 2.0);
    EXPECT_NEAR(m.eval(x)[0], expect, 1e-14);
  }
}

TEST(Kde, StandardNormalAtZero) {
  const KdeModel m = fit_kde(gaussian_sample(10000, 0.0, 12), 0.2);
  const std::vector<double> zero = {0.0};
  const double truth = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  EXPECT_NEAR(m.eval(zero), truth, 0.05 * truth);
}

TEST(Kde, SymmetricPairContributesEqually) {
  Matrix x(2, 1);
  x << -1.0, 1.0;
  const double h = 0.8;
  const KdeModel m = fit_kde(x, h);
  const std::vector<double> zero = {0.0};
  const double k = std::exp(-0.5 / (h * h)) / std::sqrt(2.0 * std::numbers::pi);
  EXPECT_NEAR(m.eval(zero), k / h, 1e-15);
}

TEST(Kde, NonPositiveBandwidthRejected) {
  EXPECT_THROW(fit_kde(gaussian_sample(5, 0.0, 1), -1.0), ValidationError);
  EXPECT_THROW(KdeModel(gaussian_sample(5, 0.0, 1), 0.0), ValidationError);
  EXPECT_THROW(fit_kde(Matrix(0, 1), 1.0), ValidationError);
}

TEST(KdeProperty, OneDimensionalDensityIntegratesToOne) {
  for (double h : {0.1, 0.5, 1.0}) {
    const KdeModel m = fit_kde(gaussian_sample(300, 0.3, 13), h);
    const int n = 4000;
    const Matrix g = grid(-10.0, 10.0, n + 1);
    const Vector v = m.eval(g);
    const double step = 20.0 / n;
    const double integral = step * (v.sum() - 0.5 * (v[0] + v[n]));
    EXPECT_NEAR(integral, 1.0, 1e-3);
  }
}

TEST(KdeRatio, IdenticalSamplesGiveOne) {
  const Matrix s = gaussian_sample(200, 0.0, 14);
  const KdeModel q = fit_kde(s, 0.4);
  const KdeModel p = fit_kde(s, 0.4);
  const Matrix g = grid(-2.0, 2.0, 21);
  for (int i = 0; i < g.rows(); ++i) EXPECT_NEAR(kde_ratio_predict(q, p, row_view(g, i)), 1.0, 1e-12);
}

TEST(KdeRatio, FloorBoundsDenominator) {
  Matrix qs(1, 1), ps(1, 1);
  qs << 0.0;
  ps << 50.0;
  const KdeModel q = fit_kde(qs, 1.0);
  const KdeModel p = fit_kde(ps, 1.0);
  const std::vector<double> x = {0.0};
  const double floor = 1.0;
  EXPECT_NEAR(kde_ratio_predict(q, p, x, floor, 10.0), q.eval(x) / floor, 1e-15);
  EXPECT_DOUBLE_EQ(kde_ratio_predict(q, p, x, 1e-6, 10.0), 10.0);
}

TEST(KdeRatio, ShiftErrorDecreasesWithSampleSize) {
  std::vector<double> err;
  for (int n : {250, 1000, 4000}) {
    double total = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
      const auto m = fit_kde_ratio(gaussian_sample(n, 0.0, 300 + s), gaussian_sample(n, 0.5, 400 + s));
      total += shifted_ratio_error(*m);
    }
    err.push_back(total / 5.0);
  }
  EXPECT_GT(err[0], err[1]);
  EXPECT_GT(err[1], err[2]);
}

TEST(RatioProperty, PredictionsWithinBound) {
  const Matrix h = gaussian_sample(300, 0.0, 15);
  const Matrix e = gaussian_sample(300, 2.5, 16);
  const Matrix g = grid(-6.0, 8.0, 141);
  KulsifOptions ko;
  ko.ratio_max = 4.0;
  const Vector r1 = fit_kulsif(h, e, ko).predict(g);
  KdeRatioOptions kd;
  kd.ratio_max = 4.0;
  const Vector r2 = fit_kde_ratio(h, e, kd)->predict(g);
  for (const Vector* r : {&r1, &r2}) {
    EXPECT_GE(r->minCoeff(), 0.0);
    EXPECT_LE(r->maxCoeff(), 4.0);
  }
  EXPECT_EQ(r2.maxCoeff(), 4.0);
}

// |r-hat w-hat - r w| <= C1 |w-hat - w| + C2 |r-hat - r| pointwise once both
// estimates respect their bounds, so the L2 error of the product is at most
// (C1 + C2) times the larger of the two errors.
TEST(RatioProperty, ProductErrorBoundedByFactorErrors) {
  const TabularProblem prob = reference_problem();
  const TabularDGP& dgp = prob.dgp;
  const SampledData data = sample_datasets(dgp, 400, 0.5, std::uint64_t{17});
  NuisanceBounds bounds;
  bounds.ratio_max = 10.0;
  bounds.weight_max = 100.0;
  const auto ratio = std::make_shared<KulsifModel>(
      fit_kulsif(data.hist.covariates(), data.evl.covariates()));
  const NuisanceSet ns(ratio, fit_behavior_krr(data.hist), oracle_outcome(dgp), bounds);

  const Matrix states = state_covariates(dgp.states());
  const Vector r_hat = ns.ratio(states);
  double err_r = 0.0, err_w = 0.0, err_rw = 0.0;
  for (int x = 0; x < dgp.states(); ++x) {
    err_r += dgp.p()[x] * std::pow(r_hat[x] - dgp.ratio(x), 2);
    for (int a = 0; a < dgp.actions(); ++a) {
      const std::vector<int> act = {a};
      const std::vector<double> target = {(*prob.pi_e)(x, a)};
      const double w_hat = ns.weight(states.row(x), act, target)[0];
      const double w = target[0] / dgp.pi_b()(x, a);
      const double mass = dgp.p()[x] * dgp.pi_b()(x, a);
      err_w += mass * std::pow(w_hat - w, 2);
      err_rw += mass * std::pow(r_hat[x] * w_hat - dgp.ratio(x) * w, 2);
    }
  }
  const double bound = (bounds.ratio_max + bounds.weight_max) * std::max(std::sqrt(err_r), std::sqrt(err_w));
  EXPECT_LE(std::sqrt(err_rw), bound + 1e-12);
}
