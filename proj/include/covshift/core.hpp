#pragma once

// Domain types shared by every covshift module: datasets, policies, nuisance
// functions and fold partitions. Everything here is immutable after
// construction, so values can be shared freely across threads.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace covshift {

// Row-major so that each row (one covariate) is a contiguous span.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using CovariateView = std::span<const double>;

/// Raised when inputs violate a documented precondition.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical routine cannot produce a trustworthy result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline CovariateView row_view(const Matrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

/// Copies rows `idx` of `m` into a new matrix.
Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx);

/// Logged triples (x, a, y) with rewards in [0, r_max].
class HistoricalDataset {
 public:
  HistoricalDataset(Matrix covariates, std::vector<int> actions, std::vector<double> rewards,
                    int action_count, double r_max = 1.0);

  std::size_t size() const { return actions_.size(); }
  Eigen::Index dim() const { return x_.cols(); }
  int action_count() const { return action_count_; }
  double r_max() const { return r_max_; }

  const Matrix& covariates() const { return x_; }
  const std::vector<int>& actions() const { return actions_; }
  const std::vector<double>& rewards() const { return rewards_; }
  CovariateView covariate(std::size_t i) const { return row_view(x_, static_cast<Eigen::Index>(i)); }

  HistoricalDataset subset(std::span<const std::size_t> idx) const;

 private:
  Matrix x_;
  std::vector<int> actions_;
  std::vector<double> rewards_;
  int action_count_;
  double r_max_;
};

/// Target-population covariates z (no actions or rewards observed).
class EvaluationDataset {
 public:
  explicit EvaluationDataset(Matrix covariates);

  std::size_t size() const { return static_cast<std::size_t>(z_.rows()); }
  Eigen::Index dim() const { return z_.cols(); }
  const Matrix& covariates() const { return z_; }
  CovariateView covariate(std::size_t i) const { return row_view(z_, static_cast<Eigen::Index>(i)); }

  EvaluationDataset subset(std::span<const std::size_t> idx) const;

 private:
  Matrix z_;
};

/// Historical share of the pooled sample, n_hst / (n_hst + n_evl).
double historical_share(const HistoricalDataset& hist, const EvaluationDataset& evl);

// ---------------------------------------------------------------------------
// Policies

/// Implementation hook for Policy. `probabilities` writes one entry per
/// action into `out`; implementations must produce a valid distribution.
class PolicyModel {
 public:
  virtual ~PolicyModel() = default;
  virtual int action_count() const = 0;
  /// Required covariate dimension, or -1 when any dimension is accepted.
  virtual Eigen::Index dim() const { return -1; }
  virtual void probabilities(CovariateView x, std::span<double> out) const = 0;
};

/// Conditional action distribution pi(a | x) over a finite action set.
/// Cheap to copy; the underlying model is shared and immutable.
class Policy {
 public:
  explicit Policy(std::shared_ptr<const PolicyModel> model);

  int action_count() const { return model_->action_count(); }
  Eigen::Index dim() const { return model_->dim(); }

  std::vector<double> prob_vector(CovariateView x) const;
  double prob(int action, CovariateView x) const;
  /// n x |A| matrix of probabilities for every row of `x`.
  Matrix prob_matrix(const Matrix& x) const;

  const PolicyModel& model() const { return *model_; }

 private:
  void check_dim(CovariateView x) const;
  std::shared_ptr<const PolicyModel> model_;
};

Policy uniform_policy(int action_count);
Policy deterministic_policy(int action_count, int action);
/// (1 - w) * base + w * uniform.
Policy mixture_policy(const Policy& base, double uniform_weight);
/// Policy backed by an arbitrary callable; used for oracle and test policies.
Policy function_policy(int action_count,
                       std::function<void(CovariateView, std::span<double>)> fn,
                       Eigen::Index dim = -1);

/// v(z) = sum_a pi(a|z) * outcome(a, z) for one covariate, given the outcome
/// row (one entry per action).
double policy_value_at(std::span<const double> policy_probs, std::span<const double> outcome_row);

// ---------------------------------------------------------------------------
// Nuisance functions

/// Density-ratio model r(x) = q(x) / p(x).
class RatioModel {
 public:
  virtual ~RatioModel() = default;
  virtual Vector predict(const Matrix& x) const = 0;
};

/// Model with one output per action: outcome f(a, x) or behavior pi_b(a | x).
class ActionModel {
 public:
  virtual ~ActionModel() = default;
  virtual int action_count() const = 0;
  /// n x |A|.
  virtual Matrix predict(const Matrix& x) const = 0;
};

std::shared_ptr<const RatioModel> constant_ratio(double value);
std::shared_ptr<const RatioModel> function_ratio(std::function<double(CovariateView)> fn);
std::shared_ptr<const ActionModel> function_action_model(
    int action_count, std::function<double(int, CovariateView)> fn);
/// Behavior model that reports the probabilities of a known policy.
std::shared_ptr<const ActionModel> policy_action_model(const Policy& policy);

struct NuisanceBounds {
  double ratio_max = 10.0;    // C1
  double weight_max = 100.0;  // C2
  double reward_max = 1.0;    // R_max
};

/// Which rows of the full historical/evaluation samples a nuisance was fit
/// on. Filled by the cross-fitting driver for purity checks.
struct FitProvenance {
  std::vector<std::size_t> hist_rows;
  std::vector<std::size_t> evl_rows;
};

/// Per-query counters reported in estimator diagnostics.
struct ClipCounts {
  std::size_t ratio = 0;
  std::size_t weight = 0;
  std::size_t outcome = 0;
};

/// Bundle of fitted r-hat, pi_b-hat and f-hat. Every query result is clipped
/// to [0, C1], [0, C2] (for pi_e / pi_b-hat) and [0, R_max].
class NuisanceSet {
 public:
  NuisanceSet(std::shared_ptr<const RatioModel> ratio, std::shared_ptr<const ActionModel> behavior,
              std::shared_ptr<const ActionModel> outcome, NuisanceBounds bounds);

  const NuisanceBounds& bounds() const { return bounds_; }
  const FitProvenance& provenance() const { return provenance_; }
  NuisanceSet with_provenance(FitProvenance p) const;

  Vector ratio(const Matrix& x, ClipCounts* clips = nullptr) const;
  /// Raw pi_b-hat(a | x); n x |A|.
  Matrix behavior(const Matrix& x) const;
  /// f-hat(a, x); n x |A|, clipped.
  Matrix outcome(const Matrix& x, ClipCounts* clips = nullptr) const;
  /// pi_e(a | x) / pi_b-hat(a | x) clipped to [0, C2]. `target_probs` is the
  /// evaluation policy's probability of `actions[i]` at row i.
  Vector weight(const Matrix& x, std::span<const int> actions, std::span<const double> target_probs,
                ClipCounts* clips = nullptr) const;

  const RatioModel& ratio_model() const { return *ratio_; }
  const ActionModel& behavior_model() const { return *behavior_; }
  const ActionModel& outcome_model() const { return *outcome_; }

 private:
  std::shared_ptr<const RatioModel> ratio_;
  std::shared_ptr<const ActionModel> behavior_;
  std::shared_ptr<const ActionModel> outcome_;
  NuisanceBounds bounds_;
  FitProvenance provenance_;
};

double clip(double v, double lo, double hi);

// ---------------------------------------------------------------------------
// Folds

/// Random partition of [0, n) into `folds` groups whose sizes differ by at
/// most one.
class FoldPartition {
 public:
  FoldPartition(std::size_t n, int folds, std::uint64_t seed);
  /// Explicit assignment; every fold must be non-empty.
  FoldPartition(std::vector<int> fold_of, int folds);

  int folds() const { return folds_; }
  std::size_t size() const { return fold_of_.size(); }
  int fold_of(std::size_t i) const { return fold_of_[i]; }
  const std::vector<int>& assignment() const { return fold_of_; }

  std::vector<std::size_t> in_fold(int k) const;
  std::vector<std::size_t> out_of_fold(int k) const;

 private:
  std::vector<int> fold_of_;
  int folds_;
};

}  // namespace covshift
