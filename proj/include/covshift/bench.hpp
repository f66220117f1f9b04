#pragma once

// Classification data turned into logged bandit feedback under covariate
// shift, and the OPE / OPL experiment drivers built on it.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "covshift/core.hpp"
#include "covshift/estimators.hpp"
#include "covshift/opl.hpp"
#include "json.hpp"

namespace covshift {

struct LabeledDataset {
  Matrix x;
  /// 0-based, contiguous.
  std::vector<int> labels;
  int class_count = 0;
  /// Original label of each class index, ascending.
  std::vector<double> label_values;

  std::size_t size() const { return labels.size(); }
};

struct LibsvmOptions {
  /// Expected number of features; 0 infers the largest index seen.
  Eigen::Index dim = 0;
  /// Zero mean and unit variance per column (constant columns are only
  /// centered).
  bool standardize = true;
};

LabeledDataset parse_libsvm(std::istream& in, const LibsvmOptions& options = {},
                            const std::string& source = "<input>");
LabeledDataset load_libsvm(const std::string& path, const LibsvmOptions& options = {});

// ---------------------------------------------------------------------------
// Covariate-shift split

/// s_i = sigmoid(tau_i - noise_i), the historical probability before scaling
/// by C_prob.
Vector shift_scores(const Vector& tau, const Vector& noise);
/// mean_i min(1, c * s_i).
double expected_hist_fraction(const Vector& scores, double c_prob);
/// Bisection for c with expected_hist_fraction(scores, c) = target.
double calibrate_c_prob(const Vector& scores, double target, double tolerance = 1e-9);

struct ShiftSplit {
  std::vector<std::size_t> hist_rows;
  std::vector<std::size_t> evl_rows;
  double c_prob = 0.0;
  double expected_fraction = 0.0;
  double realized_fraction = 0.0;
};

/// Row i is historical with probability min(1, C_prob / (1 + exp(-tau_i +
/// noise_scale * eps_i))), tau_i the sum of the first five covariates and
/// eps_i standard normal. C_prob is calibrated so the expected historical
/// fraction equals `target_hist_fraction`.
ShiftSplit covariate_shift_split(const Matrix& x, double target_hist_fraction, double noise_scale,
                                 std::uint64_t seed);
/// Each row historical with probability target_hist_fraction, independent of x.
ShiftSplit random_split(std::size_t n, double target_hist_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Policies

struct LogisticOptions {
  double l2 = 1e-4;
  int iterations = 500;
};

/// Multinomial logistic regression trained by full-batch gradient descent
/// with step 1 / L, L the smoothness constant of the penalized loss.
class LogisticModel {
 public:
  LogisticModel(Matrix weights, Vector intercepts);

  int class_count() const { return static_cast<int>(intercepts_.size()); }
  Matrix predict_proba(const Matrix& x) const;
  int predict(CovariateView x) const;
  const Matrix& weights() const { return weights_; }
  const Vector& intercepts() const { return intercepts_; }

 private:
  Matrix weights_;  // d x L
  Vector intercepts_;
};

LogisticModel fit_logistic(const Matrix& x, const std::vector<int>& labels, int class_count,
                           const LogisticOptions& options = {});

struct BenchPolicies {
  Policy deterministic;
  Policy behavior;
  Policy evaluation;
};

/// pi_d = argmax of a logistic model fit on (x, labels); pi_b = alpha pi_d +
/// (1 - alpha) uniform; pi_e = 0.9 pi_d + 0.1 uniform.
BenchPolicies build_policies(const Matrix& x, const std::vector<int>& labels, int class_count, double alpha,
                             const LogisticOptions& options = {});

/// E_rows[ sum_a pi(a|z) 1[a = label(z)] ].
double label_reward(const Policy& pi, const Matrix& z, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Experiments

struct BenchConfig {
  std::string dataset = "dataset";
  std::vector<double> alphas = {0.7, 0.4, 0.0};
  std::size_t sample_size = 800;
  int replications = 20;
  double hist_fraction = 0.7;
  double noise_scale = 0.1;
  /// false: split rows at random, with no covariate shift.
  bool shift = true;
  std::vector<std::string> estimators = {"DRCS", "IPWCS", "DM", "IPWCS-R", "DM-R"};
  std::vector<std::string> opl_estimators = {"DRCS", "IPWCS", "DM"};
  /// Cross-fitting folds for DRCS.
  int folds = 2;
  LogisticOptions logistic;
  OplConfig opl;
  std::uint64_t seed = 0;
};

void validate(const BenchConfig& config);

/// One replication's data: logged feedback from pi_b on the historical rows,
/// the evaluation covariates, the policies and the label-based ground truth
/// R* = label_reward(pi_e, evaluation rows).
struct OpeInstance {
  HistoricalDataset hist;
  EvaluationDataset evl;
  std::vector<int> evl_labels;
  BenchPolicies policies;
  ShiftSplit split;
  double truth = 0.0;
  int folds = 2;
};

OpeInstance make_instance(const LabeledDataset& data, const BenchConfig& config, double alpha, int replication);

using OpeEstimator = std::function<double(const OpeInstance&, std::uint64_t seed)>;

/// DRCS, DRCS-SN, IPWCS, IPWCS-SN, DM, IPWCS-R, DM-R, plus two baselines:
/// ORACLE (returns R*) and IPW-TRUE (true pi_b, no ratio).
OpeEstimator ope_estimator(const std::string& name);
std::vector<std::string> ope_estimator_names();

/// The estimators that need only logged data (all but ORACLE and IPW-TRUE),
/// run on arbitrary samples. Only DRCS and DRCS-SN fill more than `estimate`.
EstimateReport estimate_by_name(const std::string& name, const HistoricalDataset& hist,
                                const EvaluationDataset& evl, const Policy& pi_e, int folds,
                                std::uint64_t seed);
std::vector<std::string> data_estimator_names();

struct ResultRow {
  std::string dataset;
  double alpha = 0.0;
  std::string estimator;
  /// MSE for OPE, mean RWD for OPL, over the successful replications.
  double value = 0.0;
  double sd = 0.0;
  int n_reps = 0;
  int failures = 0;
  std::uint64_t seed = 0;
  std::vector<double> per_rep;
  std::string first_error;
};

std::vector<ResultRow> run_ope_experiment(const LabeledDataset& data, const BenchConfig& config);
std::vector<ResultRow> run_opl_experiment(const LabeledDataset& data, const BenchConfig& config);

/// Columns dataset,alpha,estimator,mse_or_rwd,sd,n_reps,seed. The optional
/// first line is a '#'-prefixed timestamp comment.
void write_csv(std::ostream& out, const std::vector<ResultRow>& rows, bool timestamp);
nlohmann::json to_json(const std::vector<ResultRow>& rows);

}  // namespace covshift
