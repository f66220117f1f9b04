#pragma once

// Off-policy value estimators under covariate shift: direct method, the
// inverse-probability-weighted family, the cross-fitted doubly robust
// estimator and its variants, plus exact efficiency bounds for tabular DGPs.

#include <cstdint>
#include <functional>
#include <vector>

#include "covshift/core.hpp"
#include "covshift/density_ratio.hpp"
#include "covshift/regression.hpp"
#include "covshift/synthetic.hpp"
#include "json.hpp"

namespace covshift {

struct RangeSummary {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  std::size_t count = 0;

  void add(double v);
};

/// Ranges of r-hat, w-hat and f-hat(A, X) as they entered the estimate, with
/// the number of clipped queries and the bounds in force.
struct NuisanceDiagnostics {
  RangeSummary ratio;
  RangeSummary weight;
  RangeSummary outcome;
  ClipCounts clips;
  NuisanceBounds bounds;
};

struct EstimateReport {
  double estimate = 0.0;
  /// Plug-in asymptotic variance (the scale of n * MSE), n = n_hst + n_evl.
  double variance = 0.0;
  /// sqrt(variance / n).
  double standard_error = 0.0;
  std::vector<double> per_fold;
  /// Normalizer applied to each fold's historical term (1 unless
  /// self-normalized).
  std::vector<double> normalizers;
  /// Rows of the full samples each fold's nuisances were fit on.
  std::vector<FitProvenance> provenance;
  NuisanceDiagnostics diagnostics;
};

nlohmann::json to_json(const EstimateReport& report);

/// Fits r-hat, pi_b-hat and f-hat from a historical and an evaluation sample.
using NuisanceFitter =
    std::function<NuisanceSet(const HistoricalDataset&, const EvaluationDataset&)>;

/// Ignores its inputs and returns `set`; used with oracle or corrupted
/// nuisances.
NuisanceFitter fixed_nuisances(NuisanceSet set);

enum class RatioMethod { Kulsif, Kde };
enum class RegressionMethod { KernelRidge, NadarayaWatson };

struct KernelNuisanceConfig {
  RatioMethod ratio = RatioMethod::Kulsif;
  RegressionMethod behavior = RegressionMethod::KernelRidge;
  RegressionMethod outcome = RegressionMethod::KernelRidge;
  KulsifOptions kulsif;
  KdeRatioOptions kde;
  BehaviorOptions behavior_krr;
  /// Bandwidth for the kernel behavior estimate; <= 0 selects the median heuristic.
  double behavior_nw_bandwidth = 0.0;
  KernelRidgeOptions outcome_krr;
  NadarayaWatsonOptions outcome_nw;
  /// C1; C2 defaults to 1 / behavior floor. R_max is taken from the data.
  double ratio_max = 10.0;
  double weight_max = 0.0;
};

NuisanceFitter kernel_nuisance_fitter(const KernelNuisanceConfig& config);

// ---------------------------------------------------------------------------
// Single-sample estimators (nuisances fit elsewhere, no cross-fitting)

/// E_evl[ sum_a pi_e(a|Z) f-hat(a, Z) ].
double dm_estimate(const NuisanceSet& nuisances, const Policy& pi_e, const EvaluationDataset& evl);

/// E_hst[ r-hat(X) pi_e(A|X) Y / pi_b(A|X) ] with the true behavior policy.
/// r-hat is used unclipped.
double ipwcsb_estimate(const RatioModel& ratio, const Policy& behavior, const Policy& pi_e,
                       const HistoricalDataset& hist);

/// E_hst[ r-hat(X) w-hat(A, X) Y ] with clipped r-hat and w-hat.
double ipwcs_estimate(const NuisanceSet& nuisances, const Policy& pi_e,
                      const HistoricalDataset& hist);

enum class Normalizer {
  None,
  /// 1 / E_hst[ 1 / pi_b-hat(A|X) ].
  InversePropensity,
  /// 1 / E_hst[ r-hat w-hat ].
  ImportanceWeight,
};

/// ipwcs_estimate with its mean scaled by the chosen normalizer.
double ipwcs_sn_estimate(const NuisanceSet& nuisances, const Policy& pi_e,
                         const HistoricalDataset& hist,
                         Normalizer normalizer = Normalizer::InversePropensity);

/// rho^-1 Var_hst[ r-hat w-hat (Y - f-hat) ] + (1 - rho)^-1 Var_evl[ v-hat ]
/// with unbiased sample variances.
double eif_variance_estimate(const NuisanceSet& nuisances, const Policy& pi_e,
                             const HistoricalDataset& hist, const EvaluationDataset& evl);

// ---------------------------------------------------------------------------
// Cross-fitted estimators

/// Fold partitions of both samples plus the nuisances fit for each fold on
/// its out-of-fold rows.
struct CrossFit {
  FoldPartition hist_folds;
  FoldPartition evl_folds;
  std::vector<NuisanceSet> nuisances;
};

/// Partitions with `folds` groups each; the evaluation partition uses a seed
/// derived from `seed`.
CrossFit cross_fit(const HistoricalDataset& hist, const EvaluationDataset& evl,
                   const NuisanceFitter& fitter, int folds, std::uint64_t seed);
CrossFit cross_fit(const HistoricalDataset& hist, const EvaluationDataset& evl,
                   const NuisanceFitter& fitter, FoldPartition hist_folds, FoldPartition evl_folds);

struct CrossFitOptions {
  int folds = 2;
  std::uint64_t seed = 0;
  Normalizer normalizer = Normalizer::None;
};

/// Per fold k, nuisances are fit on the out-of-fold rows of both samples and
///   R_k = N_k * E_{hist fold k}[ r-hat w-hat (Y - f-hat) ] + E_{evl fold k}[ v-hat ],
/// where N_k is the fold's normalizer (1 by default). The estimate is the mean
/// of R_k. Requires 2 <= folds <= min(n_hst, n_evl).
EstimateReport drcs_estimate(const HistoricalDataset& hist, const EvaluationDataset& evl,
                             const Policy& pi_e, const NuisanceFitter& fitter,
                             const CrossFitOptions& options = {});
/// Same with explicit partitions of the historical and evaluation rows (equal
/// fold counts).
EstimateReport drcs_estimate(const HistoricalDataset& hist, const EvaluationDataset& evl,
                             const Policy& pi_e, const NuisanceFitter& fitter,
                             const FoldPartition& hist_folds, const FoldPartition& evl_folds,
                             Normalizer normalizer = Normalizer::None);

/// Cross-fitted doubly robust estimator without covariate shift:
///   R_k = E_{hist fold k}[ w-hat (Y - f-hat) + v-hat(X) ].
/// The fitter sees the out-of-fold historical covariates as its evaluation
/// sample.
EstimateReport dr_standard_estimate(const HistoricalDataset& hist, const Policy& pi_e,
                                    const NuisanceFitter& fitter, const FoldPartition& folds);

/// Finitely supported target law: q puts mass weights[j] on points.row(j).
struct DiscreteLaw {
  Matrix points;
  Vector weights;
};

/// The evaluation marginal q of a tabular DGP.
DiscreteLaw tabular_law(const TabularDGP& dgp);
/// Composite Simpson rule for a 1-d density on [lo, hi]; `intervals` is
/// rounded up to an even number.
DiscreteLaw quadrature_law_1d(const std::function<double(double)>& density, double lo, double hi,
                              int intervals = 2000);

/// DRCS with the evaluation marginal known: per fold
///   R_k = E_{hist fold k}[ r-hat w-hat (Y - f-hat) ] + sum_j q_j v-hat(z_j).
/// The fitter receives the law's support points as its evaluation sample.
/// The reported variance is Var_hst[ r-hat w-hat (Y - f-hat) ] on the n_hst scale.
EstimateReport drcs_known_q(const HistoricalDataset& hist, const DiscreteLaw& law,
                            const Policy& pi_e, const NuisanceFitter& fitter,
                            const CrossFitOptions& options = {});

// ---------------------------------------------------------------------------
// Exact quantities on tabular DGPs

/// rho^-1 E_{p, pi_b}[ r^2 w^2 f (1 - f) ] + (1 - rho)^-1 Var_q[ v ].
double efficiency_bound_tabular(const TabularDGP& dgp, const Policy& pi_e);
/// E_{p, pi_b}[ w^2 f (1 - f) ] + Var_p[ v ]: the bound without covariate shift.
double no_shift_bound_tabular(const TabularDGP& dgp, const Policy& pi_e);
/// rho^-1 Var[ r (w Y - v) ] + (1 - rho)^-1 Var_q[ v ].
double ipwcsb_asymptotic_variance_tabular(const TabularDGP& dgp, const Policy& pi_e);
/// E_{p, pi_b}[ r^2 w^2 f (1 - f) ] on the n_hst scale.
double known_q_bound_tabular(const TabularDGP& dgp, const Policy& pi_e);

}  // namespace covshift
