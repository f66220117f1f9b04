#pragma once

// Off-policy learning over a softmax policy class with Gaussian-kernel
// features: pi(a|x) proportional to exp(beta_a . phi(x) + beta0_a), where
// phi_u(x) = exp(-||x - c_u||^2 / (2 sigma2)) for m centers c_u taken from
// the historical covariates.

#include <cstdint>
#include <memory>
#include <vector>

#include "covshift/core.hpp"
#include "covshift/estimators.hpp"
#include "json.hpp"

namespace covshift {

class SoftmaxKernelPolicy final : public PolicyModel {
 public:
  /// beta is |A| x m, beta0 has |A| entries.
  SoftmaxKernelPolicy(Matrix centers, double sigma2, Matrix beta, Vector beta0);
  /// All-zero parameters: the uniform policy.
  SoftmaxKernelPolicy(Matrix centers, double sigma2, int action_count);

  int action_count() const override { return static_cast<int>(beta0_.size()); }
  Eigen::Index dim() const override { return centers_.cols(); }
  void probabilities(CovariateView x, std::span<double> out) const override;

  const Matrix& centers() const { return centers_; }
  double sigma2() const { return sigma2_; }
  const Matrix& beta() const { return beta_; }
  const Vector& beta0() const { return beta0_; }

  /// n x m feature matrix.
  Matrix features(const Matrix& x) const;

  /// Flat parameter vector: beta row by row, then beta0.
  Vector parameters() const;
  std::size_t parameter_count() const { return static_cast<std::size_t>(beta_.size() + beta0_.size()); }
  SoftmaxKernelPolicy with_parameters(const Vector& theta) const;

 private:
  Matrix centers_;
  double sigma2_;
  Matrix beta_;
  Vector beta0_;
};

Policy as_policy(const SoftmaxKernelPolicy& model);

nlohmann::json to_json(const SoftmaxKernelPolicy& policy);
SoftmaxKernelPolicy softmax_policy_from_json(const nlohmann::json& j);

/// Row-wise softmax of scores (n x |A|), max-shifted.
Matrix softmax_rows(const Matrix& scores);

/// min(max_centers, n) rows drawn without replacement.
Matrix select_centers(const Matrix& x, std::size_t max_centers, std::uint64_t seed);

enum class OplEstimator { Drcs, Ipwcs, Dm };

const char* to_string(OplEstimator kind);
OplEstimator opl_estimator_from_string(const std::string& name);

/// Nuisance models each estimator is paired with in the experiments: DRCS
/// uses KuLSIF with kernel ridge behavior and outcome; IPWCS uses the KDE
/// ratio with a kernel-smoothed behavior estimate; DM uses the
/// Nadaraya-Watson outcome.
KernelNuisanceConfig default_nuisance_config(OplEstimator kind);

/// Every estimator objective is linear in the policy:
///   J(pi) = sum_i hist_weight_i * hist_coef_i * pi(A_i | X_i)
///         + sum_j evl_weight_j * sum_a evl_coef(j, a) * pi(a | Z_j).
/// DRCS: hist_coef = r-hat (Y - f-hat(A, X)) / pi_b-hat(A|X), evl_coef = f-hat.
/// IPWCS: hist_coef = r-hat Y / pi_b-hat(A|X), evl_coef = 0.
/// DM: hist_coef = 0, evl_coef = f-hat.
/// 1 / pi_b-hat is capped at C2, so with lambda = 0 the DRCS objective matches
/// drcs_estimate whenever the weight clip is inactive (the default C2 = 1 /
/// behavior floor guarantees that).
struct OplTerms {
  Matrix hist_x;
  std::vector<int> actions;
  Vector hist_coef;
  Vector hist_weight;
  Matrix evl_x;
  Matrix evl_coef;
  Vector evl_weight;
  int action_count = 0;
};

/// Terms from cross-fitted nuisances: each row uses the nuisances of its
/// fold, weighted 1 / (folds * fold size) so the objective is the average of
/// per-fold means.
OplTerms opl_terms(const HistoricalDataset& hist, const EvaluationDataset& evl, const CrossFit& fit,
                   OplEstimator kind);
/// Terms from a single nuisance set, uniform weights 1/n.
OplTerms opl_terms(const HistoricalDataset& hist, const EvaluationDataset& evl,
                   const NuisanceSet& nuisances, OplEstimator kind);
/// Restriction to the given rows, reweighted uniformly.
OplTerms subset(const OplTerms& terms, std::span<const std::size_t> hist_rows,
                std::span<const std::size_t> evl_rows);

/// J(pi) - lambda * ||theta||^2 over every beta including intercepts.
double opl_objective(const SoftmaxKernelPolicy& policy, const OplTerms& terms, double lambda);
/// Gradient with respect to parameters() in the same layout.
Vector opl_gradient(const SoftmaxKernelPolicy& policy, const OplTerms& terms, double lambda);

/// DRCS objective with per-fold nuisances.
double opl_objective(const SoftmaxKernelPolicy& policy, const HistoricalDataset& hist,
                     const EvaluationDataset& evl, const CrossFit& fit, double lambda);
Vector opl_gradient(const SoftmaxKernelPolicy& policy, const HistoricalDataset& hist,
                    const EvaluationDataset& evl, const CrossFit& fit, double lambda);

struct OptimizerOptions {
  int max_iterations = 2000;
  /// Stop once ||gradient|| falls below this.
  double tolerance = 1e-6;
  /// First trial step of the line search, or the step itself when fixed.
  double step = 1.0;
  /// Use `step` every iteration without a line search.
  bool fixed_step = false;
  /// Armijo sufficient-increase constant.
  double armijo = 1e-4;
};

struct OptimizeResult {
  Vector theta;
  double objective = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Objective before the first step and after every step.
  std::vector<double> trace;
};

/// Gradient ascent on opl_objective from `start`. Throws NumericalError
/// carrying the trace if the objective turns non-finite.
OptimizeResult maximize_objective(const SoftmaxKernelPolicy& start, const OplTerms& terms, double lambda,
                                  const OptimizerOptions& options = {});

struct OplConfig {
  /// Kernel widths; empty selects {0.5, 1, 2} times the squared median
  /// pairwise distance of the historical covariates.
  std::vector<double> sigma2_grid;
  std::vector<double> lambda_grid = {1e-4, 1e-3, 1e-2};
  /// Cross-fitting folds for DRCS nuisances.
  int folds = 2;
  int cv_folds = 2;
  std::size_t max_centers = 100;
  OptimizerOptions optimizer;
  std::uint64_t seed = 0;
};

void validate(const OplConfig& config);

struct CvScore {
  double sigma2 = 0.0;
  double lambda = 0.0;
  /// Sum over CV folds of the unregularized held-out objective.
  double score = 0.0;
  std::vector<double> fold_scores;
};

struct TrainResult {
  SoftmaxKernelPolicy policy;
  double sigma2 = 0.0;
  double lambda = 0.0;
  std::vector<CvScore> scores;
  /// CV fold of every historical and evaluation row.
  std::vector<int> hist_cv_folds;
  std::vector<int> evl_cv_folds;
  OptimizeResult fit;
};

/// Fits nuisances (cross-fitted for DRCS, on all rows otherwise), selects
/// (sigma2, lambda) by L-fold cross-validation and refits on all rows.
TrainResult train_policy(const HistoricalDataset& hist, const EvaluationDataset& evl,
                         const OplConfig& config, OplEstimator kind, const NuisanceFitter& fitter);
/// Same with default_nuisance_config(kind).
TrainResult train_policy(const HistoricalDataset& hist, const EvaluationDataset& evl,
                         const OplConfig& config, OplEstimator kind);
/// Cross-validation and refit on precomputed terms.
TrainResult train_on_terms(const OplTerms& terms, const OplConfig& config);

}  // namespace covshift
