#pragma once

// Nuisance regressions on historical data: kernel ridge and Nadaraya-Watson
// models for the outcome f(a, x) and the behavior policy pi_b(a | x).

#include <memory>
#include <vector>

#include "covshift/core.hpp"

namespace covshift {

/// 10^(k/4) for k = -12..12.
std::vector<double> default_ridge_grid();
/// Mean squared leave-one-out residual of kernel ridge regression
/// (K + lambda I) alpha = Y for each lambda, from one eigendecomposition of K:
/// e_i = (Y_i - (H Y)_i) / (1 - H_ii), H = K (K + lambda I)^-1.
std::vector<double> loo_errors(const Matrix& gram, const Matrix& targets, const std::vector<double>& grid);
/// Grid value with the smallest leave-one-out error (the largest value when
/// fewer than two rows).
double loo_ridge(const Matrix& gram, const Matrix& targets,
                 const std::vector<double>& grid = default_ridge_grid());

struct KernelRidgeOptions {
  /// <= 0 selects the median pairwise distance of the training covariates.
  double bandwidth = 0.0;
  /// 0 selects the ridge per action by leave-one-out error over
  /// default_ridge_grid().
  double ridge = 0.0;
  /// Predictions are clipped to [0, reward_max]; <= 0 takes R_max from the data.
  double reward_max = 0.0;
};

/// One kernel ridge regressor per action, fit on mean-centred targets:
///   g_a = argmin sum_{i: a_i = a} (y_i - ybar_a - g(x_i))^2 + ridge ||g||^2,
/// predict(a, x) = clip(ybar_a + g_a(x), 0, reward_max).
/// Actions without samples predict the global mean reward.
class KernelRidgeModel final : public ActionModel {
 public:
  struct PerAction {
    Matrix centers;
    Vector alpha;
    double mean = 0.0;
    double relative_residual = 0.0;
    /// Ridge actually used (the configured one or the LOO choice).
    double ridge = 0.0;
  };

  KernelRidgeModel(std::vector<PerAction> per_action, double bandwidth, double ridge,
                   double reward_max);

  int action_count() const override { return static_cast<int>(per_action_.size()); }
  Matrix predict(const Matrix& x) const override;

  double bandwidth() const { return bandwidth_; }
  double ridge() const { return ridge_; }
  const PerAction& action(int a) const { return per_action_[static_cast<std::size_t>(a)]; }

 private:
  std::vector<PerAction> per_action_;
  double bandwidth_;
  double ridge_;
  double reward_max_;
};

std::shared_ptr<const KernelRidgeModel> fit_outcome_krr(const HistoricalDataset& data,
                                                        const KernelRidgeOptions& options = {});

struct BehaviorOptions {
  double bandwidth = 0.0;
  /// 0 selects the ridge by leave-one-out error over default_ridge_grid().
  double ridge = 0.0;
  /// Lower bound eps_b on every estimated probability.
  double floor = 0.01;
};

/// Clamps `v` to [0, 1] and renormalizes to sum 1, holding entries that would
/// fall under `floor` at exactly `floor`. Requires floor * |A| <= 1.
void clamp_renormalize(std::span<double> v, double floor);

/// pi_b-hat from one-vs-rest indicator regression (shared Gram matrix),
/// clamped at the floor and renormalized. A single-action problem yields 1.
class BehaviorKrrModel final : public ActionModel {
 public:
  BehaviorKrrModel(Matrix centers, Matrix alpha, Vector means, double bandwidth, double floor,
                   double relative_residual, double ridge);

  int action_count() const override { return static_cast<int>(means_.size()); }
  Matrix predict(const Matrix& x) const override;
  double relative_residual() const { return relative_residual_; }
  double ridge() const { return ridge_; }

 private:
  Matrix centers_;
  Matrix alpha_;  // n x |A|
  Vector means_;
  double bandwidth_;
  double floor_;
  double relative_residual_;
  double ridge_;
};

std::shared_ptr<const BehaviorKrrModel> fit_behavior_krr(const HistoricalDataset& data,
                                                         const BehaviorOptions& options = {});

struct NadarayaWatsonOptions {
  /// <= 0 selects the median pairwise distance of the training covariates.
  double bandwidth = 0.0;
  /// Fall back to the action's mean reward where the kernel mass vanishes
  /// (denominator < 1e-12). Without it such queries throw.
  bool fallback = true;
};

/// predict(a, x) = sum_{i: a_i = a} K_h(x_i - x) y_i / sum_{i: a_i = a} K_h(x_i - x).
class NadarayaWatsonModel final : public ActionModel {
 public:
  NadarayaWatsonModel(HistoricalDataset data, double bandwidth, bool fallback);

  int action_count() const override { return data_.action_count(); }
  Matrix predict(const Matrix& x) const override;
  double predict(int action, CovariateView x) const;
  double bandwidth() const { return bandwidth_; }

 private:
  HistoricalDataset data_;
  double bandwidth_;
  bool fallback_;
  std::vector<double> action_mean_;
  std::vector<std::size_t> action_count_;
  double global_mean_;
};

std::shared_ptr<const NadarayaWatsonModel> fit_outcome_nw(const HistoricalDataset& data,
                                                          const NadarayaWatsonOptions& options = {});

/// Kernel (Nadaraya-Watson) estimate of pi_b(a | x) from action indicators,
/// clamped at the floor and renormalized. Falls back to the empirical action
/// frequencies where the kernel mass vanishes.
class BehaviorNwModel final : public ActionModel {
 public:
  BehaviorNwModel(Matrix covariates, std::vector<int> actions, int action_count, double bandwidth,
                  double floor);

  int action_count() const override { return action_count_; }
  Matrix predict(const Matrix& x) const override;

 private:
  Matrix x_;
  std::vector<int> actions_;
  int action_count_;
  double bandwidth_;
  double floor_;
  std::vector<double> frequencies_;
};

std::shared_ptr<const BehaviorNwModel> fit_behavior_nw(const HistoricalDataset& data,
                                                       double bandwidth = 0.0,
                                                       double floor = 0.01);

}  // namespace covshift
