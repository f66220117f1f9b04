#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "covshift/bench.hpp"

using namespace covshift;

namespace {

const std::string kSatImage = std::string(COVSHIFT_DATA) + "/satimage.libsvm";
const std::string kVehicle = std::string(COVSHIFT_DATA) + "/vehicle.libsvm";

LabeledDataset parse(const std::string& text, LibsvmOptions o = {}) {
  std::istringstream in(text);
  return parse_libsvm(in, o);
}

const LabeledDataset& vehicle() {
  static const LabeledDataset d = load_libsvm(kVehicle);
  return d;
}

const LabeledDataset& satimage() {
  static const LabeledDataset d = load_libsvm(kSatImage);
  return d;
}

BenchConfig small_config() {
  BenchConfig c;
  c.dataset = "vehicle";
  c.sample_size = 300;
  c.replications = 3;
  c.estimators = {"DM", "IPW-TRUE", "ORACLE"};
  return c;
}

}  // namespace

TEST(Libsvm, ParsesSparseLine) {
  LibsvmOptions o;
  o.dim = 4;
  o.standardize = false;
  const LabeledDataset d = parse("3 1:0.5 4:-1.2\n", o);
  ASSERT_EQ(d.x.rows(), 1);
  ASSERT_EQ(d.x.cols(), 4);
  EXPECT_EQ(d.x(0, 0), 0.5);
  EXPECT_EQ(d.x(0, 1), 0.0);
  EXPECT_EQ(d.x(0, 2), 0.0);
  EXPECT_EQ(d.x(0, 3), -1.2);
  EXPECT_EQ(d.labels, std::vector<int>{0});
  EXPECT_EQ(d.label_values, std::vector<double>{3.0});
}

TEST(Libsvm, LabelsRemappedInAscendingOrder) {
  LibsvmOptions o;
  o.standardize = false;
  const LabeledDataset d = parse("7 1:1\n-1 2:1\n3 1:2 # comment\n\n7 2:3\n", o);
  EXPECT_EQ(d.class_count, 3);
  EXPECT_EQ(d.labels, (std::vector<int>{2, 0, 1, 2}));
  EXPECT_EQ(d.x.cols(), 2);
}

TEST(Libsvm, Standardizes) {
  const LabeledDataset d = parse("0 1:1 2:5\n1 1:2 2:5\n0 1:4 2:5\n1 1:9 2:5\n");
  EXPECT_NEAR(d.x.col(0).mean(), 0.0, 1e-14);
  EXPECT_NEAR(d.x.col(0).squaredNorm() / 4.0, 1.0, 1e-12);
  // Constant column: centred only.
  EXPECT_EQ(d.x.col(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Libsvm, Errors) {
  EXPECT_THROW(parse(""), ValidationError);
  EXPECT_THROW(parse("# only a comment\n\n"), ValidationError);
  try {
    parse("1 1:0.5\n2 1:x\n");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse("1 0:1\n"), ValidationError);
  EXPECT_THROW(parse("1 3:1 2:1\n"), ValidationError);
  EXPECT_THROW(parse("1 2:1 2:1\n"), ValidationError);
  EXPECT_THROW(parse("1 1.5:1\n"), ValidationError);
  EXPECT_THROW(parse("1 nocolon\n"), ValidationError);
  EXPECT_THROW(parse("abc 1:1\n"), ValidationError);
  LibsvmOptions o;
  o.dim = 2;
  EXPECT_THROW(parse("1 3:1\n", o), ValidationError);
  EXPECT_THROW(load_libsvm("/nonexistent/file.libsvm"), ValidationError);
}

TEST(Libsvm, SatImageShape) {
  const LabeledDataset& d = satimage();
  EXPECT_EQ(d.size(), 6435u);
  EXPECT_EQ(d.x.cols(), 36);
  EXPECT_EQ(d.class_count, 6);
  for (int l : d.labels) {
    EXPECT_GE(l, 0);
    EXPECT_LT(l, 6);
  }
  EXPECT_TRUE(d.x.allFinite());
}

TEST(ShiftSplit, SaturatedScoresAreAllHistorical) {
  const Vector tau = Vector::Constant(50, 1e3);
  const Vector s = shift_scores(tau, Vector::Zero(50));
  EXPECT_EQ(expected_hist_fraction(s, 1.0), 1.0);
}

TEST(ShiftSplit, SymmetricScoresGiveHalf) {
  for (double t : {0.3, 1.0, 4.0}) {
    Vector tau(2);
    tau << -t, t;
    const Vector s = shift_scores(tau, Vector::Zero(2));
    EXPECT_NEAR(expected_hist_fraction(s, 1.0), 0.5, 1e-15);
  }
}

TEST(ShiftSplit, CalibrationHitsTarget) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 2.0);
  Vector tau(500);
  for (auto& t : tau) t = g(rng);
  const Vector s = shift_scores(tau, Vector::Zero(500));
  for (double target : {0.1, 0.5, 0.7, 0.95}) {
    const double c = calibrate_c_prob(s, target);
    EXPECT_NEAR(expected_hist_fraction(s, c), target, 1e-9);
  }
  EXPECT_THROW(calibrate_c_prob(Vector::Zero(10), 0.5), NumericalError);
  EXPECT_THROW(calibrate_c_prob(s, 1.0), ValidationError);
  EXPECT_THROW(calibrate_c_prob(s, 0.0), ValidationError);
}

TEST(ShiftSplit, SatImageRealizedFraction) {
  const LabeledDataset& d = satimage();
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed + 100);
    std::vector<std::size_t> rows(d.size());
    std::iota(rows.begin(), rows.end(), 0);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(800);
    const ShiftSplit s = covariate_shift_split(select_rows(d.x, rows), 0.7, 0.1, seed);
    EXPECT_NEAR(s.expected_fraction, 0.7, 0.005);
    EXPECT_EQ(s.hist_rows.size() + s.evl_rows.size(), 800u);
    total += s.realized_fraction;
  }
  EXPECT_NEAR(total / 20.0, 0.7, 0.02);
}

TEST(ShiftSplit, ShiftFavoursLargeTau) {
  const LabeledDataset& d = satimage();
  const ShiftSplit s = covariate_shift_split(d.x, 0.7, 0.1, 5);
  const Vector tau = d.x.leftCols(5).rowwise().sum();
  double th = 0.0, te = 0.0;
  for (auto i : s.hist_rows) th += tau[static_cast<Eigen::Index>(i)];
  for (auto i : s.evl_rows) te += tau[static_cast<Eigen::Index>(i)];
  EXPECT_GT(th / s.hist_rows.size(), te / s.evl_rows.size());
}

TEST(ShiftSplit, NeedsFiveCovariates) {
  EXPECT_THROW(covariate_shift_split(Matrix::Zero(10, 4), 0.7, 0.1, 1), ValidationError);
}

TEST(ShiftSplit, RandomSplitCoversAllRows) {
  const ShiftSplit s = random_split(1000, 0.3, 9);
  EXPECT_EQ(s.hist_rows.size() + s.evl_rows.size(), 1000u);
  EXPECT_NEAR(s.realized_fraction, 0.3, 0.05);
  EXPECT_NEAR(s.expected_fraction, 0.3, 1e-12);
}

TEST(Policies, AlphaZeroBehaviorIsUniform) {
  const LabeledDataset& d = vehicle();
  const BenchPolicies p = build_policies(d.x, d.labels, d.class_count, 0.0);
  const Matrix pb = p.behavior.prob_matrix(d.x.topRows(50));
  EXPECT_LT((pb.array() - 0.25).abs().maxCoeff(), 1e-15);
}

TEST(Policies, MixtureWeights) {
  const LabeledDataset& d = vehicle();
  const BenchPolicies p = build_policies(d.x, d.labels, d.class_count, 0.7);
  const Matrix pd = p.deterministic.prob_matrix(d.x.topRows(50));
  const Matrix pb = p.behavior.prob_matrix(d.x.topRows(50));
  const Matrix pe = p.evaluation.prob_matrix(d.x.topRows(50));
  EXPECT_LT((pb - (0.7 * pd.array() + 0.3 / 4).matrix()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((pe - (0.9 * pd.array() + 0.1 / 4).matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Policies, SeparableToyFitsExactly) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x(60, 2);
  std::vector<int> y(60);
  for (int i = 0; i < 60; ++i) {
    y[i] = i % 2;
    x(i, 0) = (y[i] ? 2.0 : -2.0) + 0.3 * g(rng);
    x(i, 1) = g(rng);
  }
  const BenchPolicies p = build_policies(x, y, 2, 0.5);
  EXPECT_EQ(label_reward(p.deterministic, x, y), 1.0);
}

TEST(Policies, SatImageEvaluationBeatsUniform) {
  const LabeledDataset& d = satimage();
  const Matrix x = d.x.topRows(800);
  const std::vector<int> y(d.labels.begin(), d.labels.begin() + 800);
  const BenchPolicies p = build_policies(x, y, d.class_count, 0.7);
  EXPECT_GT(label_reward(p.evaluation, x, y), 1.0 / 6.0);
}

TEST(Policies, NeedTwoClasses) {
  EXPECT_THROW(build_policies(Matrix::Zero(5, 2), std::vector<int>(5, 1), 3, 0.5), ValidationError);
  EXPECT_THROW(build_policies(Matrix::Zero(2, 2), {0, 1}, 2, 1.5), ValidationError);
}

TEST(Logistic, ProbabilitiesNormalized) {
  const LabeledDataset& d = vehicle();
  const LogisticModel m = fit_logistic(d.x, d.labels, d.class_count);
  const Matrix p = m.predict_proba(d.x);
  EXPECT_LT((p.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_GE(p.minCoeff(), 0.0);
  const std::vector<int> bad(d.size(), 7);
  EXPECT_THROW(fit_logistic(d.x, bad, d.class_count), ValidationError);
}

TEST(LabelReward, Baselines) {
  const LabeledDataset& d = vehicle();
  EXPECT_NEAR(label_reward(uniform_policy(d.class_count), d.x, d.labels), 0.25, 1e-15);
  // Label oracle keyed on the row index, passed as the only covariate.
  Matrix xi(d.x.rows(), 1);
  for (Eigen::Index i = 0; i < xi.rows(); ++i) xi(i, 0) = static_cast<double>(i);
  const std::vector<int> y = d.labels;
  const Policy oracle = function_policy(d.class_count, [y](CovariateView z, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    out[static_cast<std::size_t>(y[static_cast<std::size_t>(z[0])])] = 1.0;
  });
  EXPECT_EQ(label_reward(oracle, xi, y), 1.0);
}

TEST(LabelReward, OrderInvariantAndBounded) {
  const LabeledDataset& d = vehicle();
  const BenchPolicies p = build_policies(d.x, d.labels, d.class_count, 0.4);
  const double r = label_reward(p.evaluation, d.x, d.labels);
  EXPECT_GE(r, 0.0);
  EXPECT_LE(r, 1.0);
  std::vector<std::size_t> perm(d.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(8));
  std::vector<int> y;
  for (auto i : perm) y.push_back(d.labels[i]);
  EXPECT_NEAR(label_reward(p.evaluation, select_rows(d.x, perm), y), r, 1e-14);
}

TEST(Instance, RewardsAreLabelMatches) {
  const LabeledDataset& d = vehicle();
  BenchConfig c = small_config();
  const OpeInstance in = make_instance(d, c, 0.4, 1);
  // Recover each historical row's label by matching covariates against the pool.
  std::map<std::vector<double>, std::vector<int>> by_row;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Vector row = d.x.row(static_cast<Eigen::Index>(i));
    by_row[std::vector<double>(row.data(), row.data() + row.size())].push_back(d.labels[i]);
  }
  std::size_t checked = 0;
  for (std::size_t i = 0; i < in.hist.size(); ++i) {
    const double y = in.hist.rewards()[i];
    EXPECT_TRUE(y == 0.0 || y == 1.0);
    const Vector row = in.hist.covariates().row(static_cast<Eigen::Index>(i));
    const auto& labels = by_row.at(std::vector<double>(row.data(), row.data() + row.size()));
    if (std::adjacent_find(labels.begin(), labels.end(), std::not_equal_to<>()) != labels.end()) continue;
    EXPECT_EQ(y, in.hist.actions()[i] == labels.front() ? 1.0 : 0.0);
    ++checked;
  }
  EXPECT_GT(checked, in.hist.size() / 2);
  EXPECT_EQ(in.hist.size() + in.evl.size(), c.sample_size);
  EXPECT_EQ(in.evl_labels.size(), in.evl.size());
  EXPECT_NEAR(in.truth, label_reward(in.policies.evaluation, in.evl.covariates(), in.evl_labels), 0.0);
}

TEST(Estimators, ScaleWithRewards) {
  const OpeInstance in = make_instance(vehicle(), small_config(), 0.4, 2);
  std::vector<double> y = in.hist.rewards();
  for (double& v : y) v *= 4.0;
  const HistoricalDataset scaled(in.hist.covariates(), in.hist.actions(), y, in.hist.action_count(), 4.0);
  for (const std::string& name : data_estimator_names()) {
    const double base = estimate_by_name(name, in.hist, in.evl, in.policies.evaluation, 2, 1).estimate;
    EXPECT_DOUBLE_EQ(estimate_by_name(name, scaled, in.evl, in.policies.evaluation, 2, 1).estimate, 4.0 * base)
        << name;
  }
}

TEST(Experiment, OracleHasZeroMse) {
  BenchConfig c = small_config();
  c.estimators = {"ORACLE"};
  c.alphas = {0.7};
  const auto rows = run_ope_experiment(vehicle(), c);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].value, 0.0);
  EXPECT_EQ(rows[0].n_reps, 3);
}

TEST(Experiment, TruePropensityIpwImprovesWithBudget) {
  BenchConfig c;
  c.dataset = "vehicle";
  c.shift = false;
  c.alphas = {0.9};
  c.replications = 40;
  c.estimators = {"IPW-TRUE"};
  double last = 1e9;
  for (std::size_t n : {200, 400, 800}) {
    c.sample_size = n;
    const auto rows = run_ope_experiment(vehicle(), c);
    EXPECT_EQ(rows[0].failures, 0);
    EXPECT_LT(rows[0].value, last) << "n = " << n;
    last = rows[0].value;
  }
}

TEST(Experiment, BitIdenticalRerun) {
  BenchConfig c = small_config();
  c.alphas = {0.7, 0.0};
  const auto a = run_ope_experiment(vehicle(), c);
  const auto b = run_ope_experiment(vehicle(), c);
  std::ostringstream sa, sb;
  write_csv(sa, a, false);
  write_csv(sb, b, false);
  EXPECT_EQ(sa.str(), sb.str());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].per_rep, b[i].per_rep);
  c.seed = 1;
  const auto other = run_ope_experiment(vehicle(), c);
  EXPECT_NE(other[0].per_rep, a[0].per_rep);
}

TEST(Experiment, FailuresAreRecordedPerCell) {
  LabeledDataset d;
  d.x = Matrix::Random(40, 5);
  d.labels.assign(40, 0);
  d.class_count = 2;
  d.label_values = {0.0, 1.0};
  BenchConfig c = small_config();
  c.sample_size = 40;
  c.alphas = {0.5};
  const auto rows = run_ope_experiment(d, c);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.failures, 3);
    EXPECT_EQ(r.n_reps, 0);
    EXPECT_TRUE(std::isnan(r.value));
    EXPECT_NE(r.first_error.find("two classes"), std::string::npos) << r.first_error;
  }
  EXPECT_TRUE(to_json(rows)[0]["mse_or_rwd"].is_null());
}

TEST(Experiment, OplUniformAndShape) {
  BenchConfig c = small_config();
  c.sample_size = 200;
  c.replications = 2;
  c.alphas = {0.0};
  c.opl.sigma2_grid = {50.0};
  c.opl.lambda_grid = {1e-2};
  c.opl.optimizer.max_iterations = 50;
  c.opl_estimators = {"DM", "IPWCS"};
  const auto rows = run_opl_experiment(vehicle(), c);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.failures, 0) << r.first_error;
    for (double v : r.per_rep) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Csv, Format) {
  ResultRow r;
  r.dataset = "satimage";
  r.alpha = 0.7;
  r.estimator = "DRCS";
  r.value = 0.1234567;
  r.sd = 0.5;
  r.n_reps = 20;
  r.seed = 42;
  std::ostringstream plain, stamped;
  write_csv(plain, {r}, false);
  EXPECT_EQ(plain.str(),
            "dataset,alpha,estimator,mse_or_rwd,sd,n_reps,seed\n"
            "satimage,0.70,DRCS,0.123457,0.500000,20,42\n");
  write_csv(stamped, {r}, true);
  EXPECT_EQ(stamped.str().rfind("# generated ", 0), 0u);
  EXPECT_EQ(stamped.str().substr(stamped.str().find('\n') + 1), plain.str());
  const auto j = to_json({r});
  EXPECT_EQ(j[0]["estimator"], "DRCS");
  EXPECT_EQ(j[0]["n_reps"], 20);
}

TEST(Config, Validation) {
  BenchConfig c;
  EXPECT_NO_THROW(validate(c));
  auto bad = [&](auto mutate) {
    BenchConfig b;
    mutate(b);
    EXPECT_THROW(validate(b), ValidationError);
  };
  bad([](BenchConfig& b) { b.alphas = {}; });
  bad([](BenchConfig& b) { b.alphas = {1.2}; });
  bad([](BenchConfig& b) { b.hist_fraction = 1.0; });
  bad([](BenchConfig& b) { b.replications = 0; });
  bad([](BenchConfig& b) { b.folds = 1; });
  bad([](BenchConfig& b) { b.estimators = {"NOPE"}; });
  bad([](BenchConfig& b) { b.opl_estimators = {"NOPE"}; });
  bad([](BenchConfig& b) { b.noise_scale = -1.0; });
  BenchConfig big;
  big.sample_size = 10000;
  EXPECT_THROW(make_instance(vehicle(), big, 0.7, 0), ValidationError);
  EXPECT_THROW(ope_estimator("NOPE"), ValidationError);
  const auto names = ope_estimator_names();
  for (const char* n : {"DRCS", "DRCS-SN", "IPWCS", "IPWCS-SN", "IPWCS-R", "DM", "DM-R", "ORACLE", "IPW-TRUE"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), n), names.end()) << n;
  }
}
