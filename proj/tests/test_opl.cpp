#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "covshift/opl.hpp"

using namespace covshift;

namespace {

struct Data {
  HistoricalDataset hist;
  EvaluationDataset evl;
};

// 2-d covariates, |A| actions logged uniformly, Bernoulli rewards with a
// smooth action-dependent mean; evaluation covariates shifted by +0.5.
Data make_data(std::size_t n_h, std::size_t n_e, int actions, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix x(static_cast<Eigen::Index>(n_h), 2), z(static_cast<Eigen::Index>(n_e), 2);
  std::vector<int> a(n_h);
  std::vector<double> y(n_h);
  for (std::size_t i = 0; i < n_h; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    x(ii, 0) = g(rng);
    x(ii, 1) = g(rng);
    a[i] = static_cast<int>(u(rng) * actions);
    const double mean = 0.5 + 0.4 * std::sin(x(ii, 0) + a[i]);
    y[i] = u(rng) < mean ? 1.0 : 0.0;
  }
  for (Eigen::Index j = 0; j < z.rows(); ++j) {
    z(j, 0) = g(rng) + 0.5;
    z(j, 1) = g(rng);
  }
  return {HistoricalDataset(x, a, y, actions), EvaluationDataset(z)};
}

SoftmaxKernelPolicy random_policy(const Matrix& x, int actions, double sigma2, std::uint64_t seed) {
  const Matrix centers = select_centers(x, 15, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix beta(actions, centers.rows());
  Vector beta0(actions);
  for (Eigen::Index i = 0; i < beta.size(); ++i) beta.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < beta0.size(); ++i) beta0[i] = g(rng);
  return SoftmaxKernelPolicy(centers, sigma2, beta, beta0);
}

NuisanceFitter kernel_fitter() { return kernel_nuisance_fitter(KernelNuisanceConfig{}); }

OplConfig small_config() {
  OplConfig c;
  c.sigma2_grid = {1.0, 4.0};
  c.lambda_grid = {1e-3, 1e-2};
  c.max_centers = 30;
  c.optimizer.max_iterations = 300;
  return c;
}

}  // namespace

TEST(SoftmaxPolicy, ProbabilitiesSumToOne) {
  const Data d = make_data(100, 60, 4, 1);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Policy pi = as_policy(random_policy(d.hist.covariates(), 4, 0.7, s));
    const Matrix p = pi.prob_matrix(d.evl.covariates());
    EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-14);
    EXPECT_GE(p.minCoeff(), 0.0);
  }
}

TEST(SoftmaxPolicy, ZeroParametersAreUniform) {
  const Data d = make_data(50, 20, 3, 2);
  const SoftmaxKernelPolicy pi(select_centers(d.hist.covariates(), 10, 0), 1.0, 3);
  const Matrix p = as_policy(pi).prob_matrix(d.evl.covariates());
  EXPECT_LT((p.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-15);
}

TEST(SoftmaxPolicy, ExtremeScoresStayFinite) {
  Matrix scores(1, 3);
  scores << 1000.0, -1000.0, 999.0;
  const Matrix p = softmax_rows(scores);
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
}

TEST(SoftmaxPolicy, CentersAreDistinctRows) {
  const Data d = make_data(40, 10, 2, 3);
  const Matrix c = select_centers(d.hist.covariates(), 100, 9);
  EXPECT_EQ(c.rows(), 40);
  const Matrix c2 = select_centers(d.hist.covariates(), 100, 9);
  EXPECT_EQ(c, c2);
  EXPECT_EQ(select_centers(d.hist.covariates(), 5, 9).rows(), 5);
}

TEST(SoftmaxPolicy, ParameterRoundTrip) {
  const Data d = make_data(50, 20, 3, 4);
  const SoftmaxKernelPolicy pi = random_policy(d.hist.covariates(), 3, 1.5, 4);
  const SoftmaxKernelPolicy back = pi.with_parameters(pi.parameters());
  EXPECT_EQ(back.beta(), pi.beta());
  EXPECT_EQ(back.beta0(), pi.beta0());
  EXPECT_EQ(pi.parameter_count(), 3u * 16u);
}

TEST(SoftmaxPolicy, JsonRoundTrip) {
  const Data d = make_data(50, 20, 3, 5);
  const SoftmaxKernelPolicy pi = random_policy(d.hist.covariates(), 3, 1.5, 5);
  const nlohmann::json j = to_json(pi);
  const SoftmaxKernelPolicy back = softmax_policy_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.centers(), pi.centers());
  EXPECT_EQ(back.beta(), pi.beta());
  EXPECT_EQ(back.beta0(), pi.beta0());
  EXPECT_EQ(back.sigma2(), pi.sigma2());

  nlohmann::json extra = j;
  extra["bias"] = 0;
  EXPECT_THROW(softmax_policy_from_json(extra), ValidationError);
  nlohmann::json wrong = j;
  wrong["action_count"] = 4;
  EXPECT_THROW(softmax_policy_from_json(wrong), ValidationError);
  nlohmann::json missing = j;
  missing.erase("sigma2");
  EXPECT_THROW(softmax_policy_from_json(missing), ValidationError);
}

TEST(SoftmaxPolicy, InvalidShapes) {
  const Matrix c = Matrix::Zero(3, 2);
  EXPECT_THROW(SoftmaxKernelPolicy(c, 0.0, 2), ValidationError);
  EXPECT_THROW(SoftmaxKernelPolicy(c, 1.0, Matrix::Zero(2, 4), Vector::Zero(2)), ValidationError);
  EXPECT_THROW(SoftmaxKernelPolicy(c, 1.0, 0), ValidationError);
}

// ---------------------------------------------------------------------------

TEST(OplObjective, ConstantOutcomeZeroResiduals) {
  const double c = 0.3;
  Data d = make_data(60, 40, 3, 6);
  const HistoricalDataset hist(d.hist.covariates(), d.hist.actions(), std::vector<double>(60, c), 3);
  const NuisanceSet ns(constant_ratio(1.0), policy_action_model(uniform_policy(3)),
                       function_action_model(3, [c](int, CovariateView) { return c; }), {});
  const OplTerms t = opl_terms(hist, d.evl, ns, OplEstimator::Drcs);
  const SoftmaxKernelPolicy uniform(select_centers(hist.covariates(), 10, 0), 1.0, 3);
  EXPECT_NEAR(opl_objective(uniform, t, 0.0), c, 1e-15);
  // A non-uniform policy sees the same value: the plug-in term is c for any pi.
  EXPECT_NEAR(opl_objective(random_policy(hist.covariates(), 3, 1.0, 1), t, 0.0), c, 1e-15);
}

TEST(OplObjective, RegularizerVanishesAtZero) {
  const Data d = make_data(80, 40, 3, 7);
  const OplTerms t = opl_terms(d.hist, d.evl, cross_fit(d.hist, d.evl, kernel_fitter(), 2, 3), OplEstimator::Drcs);
  const SoftmaxKernelPolicy zero(select_centers(d.hist.covariates(), 10, 0), 1.0, 3);
  EXPECT_EQ(opl_objective(zero, t, 1e6), opl_objective(zero, t, 0.0));
  const SoftmaxKernelPolicy pi = random_policy(d.hist.covariates(), 3, 1.0, 7);
  EXPECT_NEAR(opl_objective(pi, t, 0.0) - opl_objective(pi, t, 0.5), 0.5 * pi.parameters().squaredNorm(), 1e-12);
}

TEST(OplObjective, MatchesDrcsEstimateOnSameFolds) {
  const Data d = make_data(150, 90, 3, 8);
  const NuisanceFitter fitter = kernel_fitter();
  for (std::uint64_t s = 0; s < 3; ++s) {
    const CrossFit cf = cross_fit(d.hist, d.evl, fitter, 3, 11 + s);
    const SoftmaxKernelPolicy pi = random_policy(d.hist.covariates(), 3, 1.2, s);
    CrossFitOptions o;
    o.folds = 3;
    o.seed = 11 + s;
    const EstimateReport r = drcs_estimate(d.hist, d.evl, as_policy(pi), fitter, o);
    EXPECT_NEAR(opl_objective(pi, d.hist, d.evl, cf, 0.0), r.estimate, 1e-12);
  }
}

TEST(OplObjective, IpwcsAndDmTermsMatchEstimators) {
  const Data d = make_data(120, 70, 3, 9);
  const NuisanceSet ns = kernel_fitter()(d.hist, d.evl);
  const SoftmaxKernelPolicy pi = random_policy(d.hist.covariates(), 3, 1.2, 9);
  EXPECT_NEAR(opl_objective(pi, opl_terms(d.hist, d.evl, ns, OplEstimator::Ipwcs), 0.0),
              ipwcs_estimate(ns, as_policy(pi), d.hist), 1e-12);
  EXPECT_NEAR(opl_objective(pi, opl_terms(d.hist, d.evl, ns, OplEstimator::Dm), 0.0),
              dm_estimate(ns, as_policy(pi), d.evl), 1e-12);
}

TEST(OplGradient, MatchesCentralDifferences) {
  const Data d = make_data(100, 60, 3, 10);
  const OplTerms t = opl_terms(d.hist, d.evl, cross_fit(d.hist, d.evl, kernel_fitter(), 2, 1), OplEstimator::Drcs);
  std::mt19937_64 rng(10);
  const double h = 1e-5;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const SoftmaxKernelPolicy pi = random_policy(d.hist.covariates(), 3, 0.8 + s, 100 + s);
    const Vector g = opl_gradient(pi, t, 0.01);
    const Vector theta = pi.parameters();
    std::uniform_int_distribution<Eigen::Index> pick(0, theta.size() - 1);
    for (int k = 0; k < 20; ++k) {
      const Eigen::Index c = pick(rng);
      Vector up = theta, down = theta;
      up[c] += h;
      down[c] -= h;
      const double fd = (opl_objective(pi.with_parameters(up), t, 0.01) -
                         opl_objective(pi.with_parameters(down), t, 0.01)) / (2 * h);
      EXPECT_LT(std::abs(fd - g[c]) / std::max(std::abs(g[c]), 1e-8), 1e-5) << "coordinate " << c;
    }
  }
}

TEST(OplGradient, TwoActionsAreAntisymmetric) {
  const Data d = make_data(80, 50, 2, 11);
  const OplTerms t = opl_terms(d.hist, d.evl, kernel_fitter()(d.hist, d.evl), OplEstimator::Drcs);
  const SoftmaxKernelPolicy pi = random_policy(d.hist.covariates(), 2, 1.0, 11);
  const Vector g = opl_gradient(pi, t, 0.0);
  const Eigen::Index m = pi.centers().rows();
  EXPECT_LT((g.segment(0, m) + g.segment(m, m)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(g[2 * m] + g[2 * m + 1], 0.0, 1e-14);
}

TEST(OplGradient, VanishesAtMaximizer) {
  const Data d = make_data(100, 60, 3, 12);
  const OplTerms t = opl_terms(d.hist, d.evl, kernel_fitter()(d.hist, d.evl), OplEstimator::Drcs);
  const SoftmaxKernelPolicy start(select_centers(d.hist.covariates(), 20, 0), 1.0, 3);
  OptimizerOptions o;
  o.max_iterations = 20000;
  const OptimizeResult r = maximize_objective(start, t, 0.05, o);
  EXPECT_GT(r.iterations, 5);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(opl_gradient(start.with_parameters(r.theta), t, 0.05).norm(), o.tolerance);
}

// ---------------------------------------------------------------------------

TEST(OplOptimizer, LineSearchIsMonotone) {
  const Data d = make_data(100, 60, 3, 13);
  const OplTerms t = opl_terms(d.hist, d.evl, kernel_fitter()(d.hist, d.evl), OplEstimator::Drcs);
  const SoftmaxKernelPolicy start(select_centers(d.hist.covariates(), 20, 0), 1.0, 3);
  const OptimizeResult r = maximize_objective(start, t, 1e-3);
  ASSERT_GT(r.trace.size(), 2u);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_GE(r.trace[i], r.trace[i - 1]);
}

TEST(OplOptimizer, SmallFixedStepIsMonotone) {
  const Data d = make_data(100, 60, 3, 14);
  const OplTerms t = opl_terms(d.hist, d.evl, kernel_fitter()(d.hist, d.evl), OplEstimator::Drcs);
  const SoftmaxKernelPolicy start(select_centers(d.hist.covariates(), 20, 0), 1.0, 3);
  OptimizerOptions o;
  o.fixed_step = true;
  o.step = 0.05;
  o.max_iterations = 300;
  const OptimizeResult r = maximize_objective(start, t, 1e-3, o);
  ASSERT_EQ(r.trace.size(), 301u);
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_GE(r.trace[i], r.trace[i - 1]);
  EXPECT_GT(r.trace.back(), r.trace.front());
}

TEST(OplOptimizer, DivergenceReportsTrace) {
  const Data d = make_data(50, 30, 2, 15);
  const OplTerms t = opl_terms(d.hist, d.evl, kernel_fitter()(d.hist, d.evl), OplEstimator::Drcs);
  const SoftmaxKernelPolicy start = random_policy(d.hist.covariates(), 2, 1.0, 15);
  OptimizerOptions o;
  o.fixed_step = true;
  o.step = 1e150;
  try {
    maximize_objective(start, t, 1.0, o);
    FAIL() << "expected divergence";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("trace"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------

TEST(TrainPolicy, SelectedPairMaximizesScore) {
  const Data d = make_data(120, 80, 3, 16);
  const TrainResult r = train_policy(d.hist, d.evl, small_config(), OplEstimator::Drcs, kernel_fitter());
  ASSERT_EQ(r.scores.size(), 4u);
  for (const CvScore& s : r.scores) {
    double sum = 0.0;
    for (double f : s.fold_scores) sum += f;
    EXPECT_DOUBLE_EQ(sum, s.score);
    if (s.sigma2 != r.sigma2 || s.lambda != r.lambda) {
      const auto best = std::find_if(r.scores.begin(), r.scores.end(), [&](const CvScore& c) {
        return c.sigma2 == r.sigma2 && c.lambda == r.lambda;
      });
      EXPECT_GE(best->score, s.score);
    }
  }
}

TEST(TrainPolicy, FoldScoresUseOnlyOutOfFoldParameters) {
  const Data d = make_data(120, 80, 3, 17);
  const OplConfig cfg = small_config();
  const OplTerms terms = opl_terms(d.hist, d.evl, cross_fit(d.hist, d.evl, kernel_fitter(), 2, 0), OplEstimator::Drcs);
  const TrainResult r = train_on_terms(terms, cfg);
  const FoldPartition hcv(r.hist_cv_folds, cfg.cv_folds);
  const FoldPartition ecv(r.evl_cv_folds, cfg.cv_folds);
  const Matrix centers = select_centers(terms.hist_x, cfg.max_centers, cfg.seed);
  for (const CvScore& s : r.scores) {
    const SoftmaxKernelPolicy start(centers, s.sigma2, 3);
    for (int l = 0; l < cfg.cv_folds; ++l) {
      const OplTerms train = subset(terms, hcv.out_of_fold(l), ecv.out_of_fold(l));
      const OplTerms held = subset(terms, hcv.in_fold(l), ecv.in_fold(l));
      const OptimizeResult fit = maximize_objective(start, train, s.lambda, cfg.optimizer);
      EXPECT_DOUBLE_EQ(opl_objective(start.with_parameters(fit.theta), held, 0.0),
                       s.fold_scores[static_cast<std::size_t>(l)]);
    }
  }

  // Poisoning the fold-0 held-out rows changes the fold-0 score only through
  // the scoring step: the fold-0 parameters are still those fit on clean rows.
  OplTerms poisoned = terms;
  for (std::size_t i : hcv.in_fold(0)) poisoned.hist_coef[static_cast<Eigen::Index>(i)] += 5.0;
  const TrainResult p = train_on_terms(poisoned, cfg);
  for (std::size_t g = 0; g < r.scores.size(); ++g) {
    const SoftmaxKernelPolicy start(centers, r.scores[g].sigma2, 3);
    const OplTerms train0 = subset(terms, hcv.out_of_fold(0), ecv.out_of_fold(0));
    const OptimizeResult fit0 = maximize_objective(start, train0, r.scores[g].lambda, cfg.optimizer);
    const OplTerms held0 = subset(poisoned, hcv.in_fold(0), ecv.in_fold(0));
    EXPECT_DOUBLE_EQ(p.scores[g].fold_scores[0], opl_objective(start.with_parameters(fit0.theta), held0, 0.0));
  }
}

TEST(TrainPolicy, DominantActionIsLearned) {
  std::mt19937_64 rng(18);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = 400;
  Matrix x(n, 1), z(n / 2, 1);
  std::vector<int> a(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    x(ii, 0) = g(rng);
    a[i] = u(rng) < 0.5 ? 1 : 0;
    const double mean = a[i] == 1 ? 0.7 + 0.2 * std::sin(x(ii, 0)) : 0.3 + 0.1 * std::cos(x(ii, 0));
    y[i] = u(rng) < mean ? 1.0 : 0.0;
  }
  for (Eigen::Index j = 0; j < z.rows(); ++j) z(j, 0) = 0.5 * g(rng) + 0.5;
  const HistoricalDataset hist(x, a, y, 2);
  const EvaluationDataset evl(z);
  const TrainResult r = train_policy(hist, evl, small_config(), OplEstimator::Drcs);
  const Matrix p = as_policy(r.policy).prob_matrix(z);
  int confident = 0;
  for (Eigen::Index j = 0; j < p.rows(); ++j) confident += p(j, 1) > 0.9;
  EXPECT_GE(confident, static_cast<int>(std::ceil(0.95 * static_cast<double>(z.rows()))));
  EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-14);
}

TEST(TrainPolicy, SingleActionIsPointMass) {
  const Data d0 = make_data(60, 40, 1, 19);
  const TrainResult r = train_policy(d0.hist, d0.evl, small_config(), OplEstimator::Drcs, kernel_fitter());
  const Matrix p = as_policy(r.policy).prob_matrix(d0.evl.covariates());
  EXPECT_EQ(p.cols(), 1);
  EXPECT_EQ(p.minCoeff(), 1.0);
  CrossFitOptions o;
  o.folds = small_config().folds;
  o.seed = small_config().seed;
  const double drcs = drcs_estimate(d0.hist, d0.evl, deterministic_policy(1, 0), kernel_fitter(), o).estimate;
  const CrossFit cf = cross_fit(d0.hist, d0.evl, kernel_fitter(), o.folds, o.seed);
  EXPECT_NEAR(opl_objective(r.policy, d0.hist, d0.evl, cf, 0.0), drcs, 1e-12);
}

TEST(TrainPolicy, ConfigValidation) {
  const Data d = make_data(40, 20, 2, 20);
  OplConfig c = small_config();
  c.cv_folds = 1;
  EXPECT_THROW(train_policy(d.hist, d.evl, c, OplEstimator::Dm), ValidationError);
  c = small_config();
  c.lambda_grid.clear();
  EXPECT_THROW(train_policy(d.hist, d.evl, c, OplEstimator::Dm), ValidationError);
  c = small_config();
  c.sigma2_grid = {-1.0};
  EXPECT_THROW(train_policy(d.hist, d.evl, c, OplEstimator::Dm), ValidationError);
  EXPECT_THROW(opl_estimator_from_string("DRX"), ValidationError);
  EXPECT_EQ(opl_estimator_from_string("IPWCS"), OplEstimator::Ipwcs);
}

TEST(TrainPolicy, DrcsBeatsMisspecifiedIpwcsOnTabularDgp) {
  const TabularProblem prob = reference_problem();
  const TabularDGP& dgp = prob.dgp;
  // Reciprocal of the true ratio: weights the states the target rarely visits.
  const auto wrong_ratio = function_ratio([dgp](CovariateView x) {
    const int s = state_of(x, static_cast<int>(dgp.p().size()));
    return dgp.p()[s] / dgp.q()[s];
  });
  OplConfig cfg;
  cfg.sigma2_grid = {0.5, 2.0};
  cfg.lambda_grid = {1e-3, 1e-2};
  cfg.max_centers = 20;
  double drcs = 0.0, ipwcs = 0.0;
  for (std::uint64_t t = 0; t < 10; ++t) {
    const SampledData sd = sample_datasets(dgp, 400, dgp.rho(), 500 + t);
    cfg.seed = t;
    const TrainResult a = train_policy(sd.hist, sd.evl, cfg, OplEstimator::Drcs, fixed_nuisances(oracle_nuisances(dgp)));
    const NuisanceSet wrong(wrong_ratio, oracle_behavior(dgp), oracle_outcome(dgp), NuisanceBounds{});
    const TrainResult b = train_policy(sd.hist, sd.evl, cfg, OplEstimator::Ipwcs, fixed_nuisances(wrong));
    drcs += exact_policy_value(dgp, as_policy(a.policy)) / 10.0;
    ipwcs += exact_policy_value(dgp, as_policy(b.policy)) / 10.0;
  }
  EXPECT_GE(drcs, ipwcs);
}
