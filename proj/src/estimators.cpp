#include "covshift/estimators.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace covshift {

void RangeSummary::add(double v) {
  if (count == 0) {
    min = max = v;
  } else {
    min = std::min(min, v);
    max = std::max(max, v);
  }
  ++count;
  mean += (v - mean) / static_cast<double>(count);
}

namespace {

nlohmann::json range_json(const RangeSummary& r) {
  return {{"min", r.min}, {"max", r.max}, {"mean", r.mean}, {"count", r.count}};
}

double sample_variance(const std::vector<double>& v) {
  const std::size_t n = v.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(n - 1);
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<double> target_probs(const Policy& pi_e, const HistoricalDataset& hist) {
  const Matrix pe = pi_e.prob_matrix(hist.covariates());
  std::vector<double> out(hist.size());
  for (std::size_t i = 0; i < hist.size(); ++i) {
    out[i] = pe(static_cast<Eigen::Index>(i), hist.actions()[i]);
  }
  return out;
}

void check_policy(const Policy& pi_e, int action_count) {
  if (pi_e.action_count() != action_count) {
    throw ValidationError("estimator: evaluation policy action count does not match the data");
  }
}

// Per-row quantities on a historical sample: the residual term
// r-hat w-hat (Y - f-hat(A, X)) and 1 / pi_b-hat(A|X).
struct HistTerms {
  std::vector<double> residual;
  std::vector<double> ratio_weight;
  std::vector<double> inverse_propensity;
};

HistTerms hist_terms(const NuisanceSet& ns, const Policy& pi_e, const HistoricalDataset& hist,
                     NuisanceDiagnostics* diag, bool use_ratio = true) {
  const Matrix& x = hist.covariates();
  ClipCounts clips;
  const Vector r = use_ratio ? ns.ratio(x, &clips) : Vector::Ones(x.rows());
  const std::vector<double> pe = target_probs(pi_e, hist);
  const Vector w = ns.weight(x, hist.actions(), pe, &clips);
  const Matrix f = ns.outcome(x, &clips);
  const Matrix pb = ns.behavior(x);
  HistTerms t;
  t.residual.resize(hist.size());
  t.ratio_weight.resize(hist.size());
  t.inverse_propensity.resize(hist.size());
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const int a = hist.actions()[i];
    const double fa = f(ii, a);
    t.ratio_weight[i] = r[ii] * w[ii];
    t.residual[i] = t.ratio_weight[i] * (hist.rewards()[i] - fa);
    t.inverse_propensity[i] = pb(ii, a) > 0.0 ? 1.0 / pb(ii, a) : std::numeric_limits<double>::infinity();
    if (diag) {
      diag->ratio.add(r[ii]);
      diag->weight.add(w[ii]);
      diag->outcome.add(fa);
    }
  }
  if (diag) {
    diag->clips.ratio += clips.ratio;
    diag->clips.weight += clips.weight;
    diag->clips.outcome += clips.outcome;
  }
  return t;
}

std::vector<double> policy_values(const NuisanceSet& ns, const Policy& pi_e, const Matrix& z,
                                  NuisanceDiagnostics* diag) {
  ClipCounts clips;
  const Matrix f = ns.outcome(z, &clips);
  const Matrix pe = pi_e.prob_matrix(z);
  std::vector<double> v(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index j = 0; j < z.rows(); ++j) v[static_cast<std::size_t>(j)] = pe.row(j).dot(f.row(j));
  if (diag) diag->clips.outcome += clips.outcome;
  return v;
}

double normalizer_of(Normalizer kind, const HistTerms& t) {
  switch (kind) {
    case Normalizer::None:
      return 1.0;
    case Normalizer::InversePropensity: {
      const double m = mean_of(t.inverse_propensity);
      if (!(m > 0.0) || !std::isfinite(m)) {
        throw NumericalError("self-normalization: mean inverse propensity is not finite");
      }
      return 1.0 / m;
    }
    case Normalizer::ImportanceWeight: {
      const double m = mean_of(t.ratio_weight);
      if (!(m > 0.0)) throw NumericalError("self-normalization: importance weights sum to zero");
      return 1.0 / m;
    }
  }
  return 1.0;
}

std::uint64_t evaluation_seed(std::uint64_t seed) { return seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL; }

NuisanceSet fit_fold(const NuisanceFitter& fitter, const HistoricalDataset& hist,
                     const EvaluationDataset& evl, FitProvenance provenance, int fold) {
  try {
    return fitter(hist, evl).with_provenance(std::move(provenance));
  } catch (const ValidationError& e) {
    throw ValidationError("fold " + std::to_string(fold) + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError("fold " + std::to_string(fold) + ": " + e.what());
  }
}

void finish_report(EstimateReport& report, const std::vector<double>& hist_terms,
                   const std::vector<double>& evl_values, double rho) {
  report.estimate = mean_of(report.per_fold);
  const double n = static_cast<double>(hist_terms.size() + evl_values.size());
  report.variance = sample_variance(hist_terms) / rho + sample_variance(evl_values) / (1.0 - rho);
  report.standard_error = std::sqrt(report.variance / n);
}

}  // namespace

nlohmann::json to_json(const EstimateReport& report) {
  nlohmann::json diag = {
      {"ratio", range_json(report.diagnostics.ratio)},
      {"weight", range_json(report.diagnostics.weight)},
      {"outcome", range_json(report.diagnostics.outcome)},
      {"clipped", {{"ratio", report.diagnostics.clips.ratio},
                   {"weight", report.diagnostics.clips.weight},
                   {"outcome", report.diagnostics.clips.outcome}}},
      {"bounds", {{"ratio_max", report.diagnostics.bounds.ratio_max},
                  {"weight_max", report.diagnostics.bounds.weight_max},
                  {"reward_max", report.diagnostics.bounds.reward_max}}},
      {"normalizers", report.normalizers},
  };
  return {{"estimate", report.estimate},
          {"variance", report.variance},
          {"standard_error", report.standard_error},
          {"per_fold", report.per_fold},
          {"diagnostics", diag}};
}

NuisanceFitter fixed_nuisances(NuisanceSet set) {
  return [set = std::move(set)](const HistoricalDataset&, const EvaluationDataset&) { return set; };
}

NuisanceFitter kernel_nuisance_fitter(const KernelNuisanceConfig& config) {
  if (!(config.ratio_max > 0.0)) throw ValidationError("nuisance config: ratio_max must be positive");
  if (!(config.behavior_krr.floor > 0.0) && !(config.weight_max > 0.0)) {
    throw ValidationError("nuisance config: weight_max or a positive behavior floor is required");
  }
  return [config](const HistoricalDataset& hist, const EvaluationDataset& evl) {
    std::shared_ptr<const RatioModel> ratio;
    if (config.ratio == RatioMethod::Kulsif) {
      KulsifOptions o = config.kulsif;
      o.ratio_max = config.ratio_max;
      ratio = std::make_shared<KulsifModel>(fit_kulsif(hist.covariates(), evl.covariates(), o));
    } else {
      KdeRatioOptions o = config.kde;
      o.ratio_max = config.ratio_max;
      ratio = fit_kde_ratio(hist.covariates(), evl.covariates(), o);
    }

    std::shared_ptr<const ActionModel> behavior;
    if (config.behavior == RegressionMethod::KernelRidge) {
      behavior = fit_behavior_krr(hist, config.behavior_krr);
    } else {
      behavior = fit_behavior_nw(hist, config.behavior_nw_bandwidth, config.behavior_krr.floor);
    }

    std::shared_ptr<const ActionModel> outcome;
    if (config.outcome == RegressionMethod::KernelRidge) {
      KernelRidgeOptions o = config.outcome_krr;
      o.reward_max = hist.r_max();
      outcome = fit_outcome_krr(hist, o);
    } else {
      outcome = fit_outcome_nw(hist, config.outcome_nw);
    }

    NuisanceBounds bounds;
    bounds.ratio_max = config.ratio_max;
    bounds.weight_max = config.weight_max > 0.0 ? config.weight_max : 1.0 / config.behavior_krr.floor;
    bounds.reward_max = hist.r_max();
    return NuisanceSet(std::move(ratio), std::move(behavior), std::move(outcome), bounds);
  };
}

// ---------------------------------------------------------------------------

double dm_estimate(const NuisanceSet& nuisances, const Policy& pi_e, const EvaluationDataset& evl) {
  if (evl.size() == 0) throw ValidationError("dm_estimate: empty evaluation set");
  check_policy(pi_e, nuisances.outcome_model().action_count());
  return mean_of(policy_values(nuisances, pi_e, evl.covariates(), nullptr));
}

double ipwcsb_estimate(const RatioModel& ratio, const Policy& behavior, const Policy& pi_e,
                       const HistoricalDataset& hist) {
  if (hist.size() == 0) throw ValidationError("ipwcsb_estimate: empty historical set");
  check_policy(pi_e, hist.action_count());
  check_policy(behavior, hist.action_count());
  const Vector r = ratio.predict(hist.covariates());
  const Matrix pb = behavior.prob_matrix(hist.covariates());
  const Matrix pe = pi_e.prob_matrix(hist.covariates());
  double sum = 0.0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const int a = hist.actions()[i];
    if (!(pb(ii, a) > 0.0)) {
      std::ostringstream msg;
      msg << "ipwcsb_estimate: behavior probability is zero for logged row " << i;
      throw ValidationError(msg.str());
    }
    sum += r[ii] * pe(ii, a) / pb(ii, a) * hist.rewards()[i];
  }
  return sum / static_cast<double>(hist.size());
}

double ipwcs_estimate(const NuisanceSet& nuisances, const Policy& pi_e,
                      const HistoricalDataset& hist) {
  return ipwcs_sn_estimate(nuisances, pi_e, hist, Normalizer::None);
}

double ipwcs_sn_estimate(const NuisanceSet& nuisances, const Policy& pi_e,
                         const HistoricalDataset& hist, Normalizer normalizer) {
  if (hist.size() == 0) throw ValidationError("ipwcs_estimate: empty historical set");
  check_policy(pi_e, hist.action_count());
  const HistTerms t = hist_terms(nuisances, pi_e, hist, nullptr);
  double sum = 0.0;
  for (std::size_t i = 0; i < hist.size(); ++i) sum += t.ratio_weight[i] * hist.rewards()[i];
  return normalizer_of(normalizer, t) * sum / static_cast<double>(hist.size());
}

double eif_variance_estimate(const NuisanceSet& nuisances, const Policy& pi_e,
                             const HistoricalDataset& hist, const EvaluationDataset& evl) {
  if (hist.size() < 2 || evl.size() < 2) {
    throw ValidationError("eif_variance_estimate: need at least two rows in each sample");
  }
  check_policy(pi_e, hist.action_count());
  const HistTerms t = hist_terms(nuisances, pi_e, hist, nullptr);
  const std::vector<double> v = policy_values(nuisances, pi_e, evl.covariates(), nullptr);
  const double rho = historical_share(hist, evl);
  return sample_variance(t.residual) / rho + sample_variance(v) / (1.0 - rho);
}

// ---------------------------------------------------------------------------

CrossFit cross_fit(const HistoricalDataset& hist, const EvaluationDataset& evl,
                   const NuisanceFitter& fitter, int folds, std::uint64_t seed) {
  const std::size_t limit = std::min(hist.size(), evl.size());
  if (folds < 2) throw ValidationError("cross-fitting: fold count must be at least 2");
  if (static_cast<std::size_t>(folds) > limit) {
    throw ValidationError("cross-fitting: fold count exceeds the smaller sample size");
  }
  return cross_fit(hist, evl, fitter, FoldPartition(hist.size(), folds, seed),
                   FoldPartition(evl.size(), folds, evaluation_seed(seed)));
}

CrossFit cross_fit(const HistoricalDataset& hist, const EvaluationDataset& evl,
                   const NuisanceFitter& fitter, FoldPartition hist_folds, FoldPartition evl_folds) {
  if (hist_folds.size() != hist.size() || evl_folds.size() != evl.size()) {
    throw ValidationError("cross-fitting: partition size does not match the data");
  }
  if (hist_folds.folds() != evl_folds.folds() || hist_folds.folds() < 2) {
    throw ValidationError("cross-fitting: partitions need the same fold count (at least 2)");
  }
  if (hist.dim() != evl.dim()) throw ValidationError("cross-fitting: covariate dimensions differ");
  std::vector<NuisanceSet> sets;
  for (int k = 0; k < hist_folds.folds(); ++k) {
    FitProvenance prov{hist_folds.out_of_fold(k), evl_folds.out_of_fold(k)};
    const HistoricalDataset h_train = hist.subset(prov.hist_rows);
    const EvaluationDataset e_train = evl.subset(prov.evl_rows);
    sets.push_back(fit_fold(fitter, h_train, e_train, std::move(prov), k));
  }
  return {std::move(hist_folds), std::move(evl_folds), std::move(sets)};
}

EstimateReport drcs_estimate(const HistoricalDataset& hist, const EvaluationDataset& evl,
                             const Policy& pi_e, const NuisanceFitter& fitter,
                             const CrossFitOptions& options) {
  const std::size_t limit = std::min(hist.size(), evl.size());
  if (options.folds < 2) throw ValidationError("drcs_estimate: fold count must be at least 2");
  if (static_cast<std::size_t>(options.folds) > limit) {
    throw ValidationError("drcs_estimate: fold count exceeds the smaller sample size");
  }
  const FoldPartition hf(hist.size(), options.folds, options.seed);
  const FoldPartition ef(evl.size(), options.folds, evaluation_seed(options.seed));
  return drcs_estimate(hist, evl, pi_e, fitter, hf, ef, options.normalizer);
}

EstimateReport drcs_estimate(const HistoricalDataset& hist, const EvaluationDataset& evl,
                             const Policy& pi_e, const NuisanceFitter& fitter,
                             const FoldPartition& hist_folds, const FoldPartition& evl_folds,
                             Normalizer normalizer) {
  check_policy(pi_e, hist.action_count());
  const CrossFit cf = cross_fit(hist, evl, fitter, hist_folds, evl_folds);

  EstimateReport report;
  std::vector<double> all_terms;
  std::vector<double> all_values;
  all_terms.reserve(hist.size());
  all_values.reserve(evl.size());
  for (int k = 0; k < hist_folds.folds(); ++k) {
    const NuisanceSet& ns = cf.nuisances[static_cast<std::size_t>(k)];
    if (k == 0) report.diagnostics.bounds = ns.bounds();
    const HistoricalDataset h_eval = hist.subset(hist_folds.in_fold(k));
    const HistTerms t = hist_terms(ns, pi_e, h_eval, &report.diagnostics);
    const std::vector<double> v =
        policy_values(ns, pi_e, evl.subset(evl_folds.in_fold(k)).covariates(), &report.diagnostics);
    const double norm = normalizer_of(normalizer, t);
    for (double term : t.residual) all_terms.push_back(norm * term);
    all_values.insert(all_values.end(), v.begin(), v.end());

    report.per_fold.push_back(norm * mean_of(t.residual) + mean_of(v));
    report.normalizers.push_back(norm);
    report.provenance.push_back(ns.provenance());
  }
  finish_report(report, all_terms, all_values, historical_share(hist, evl));
  return report;
}

EstimateReport dr_standard_estimate(const HistoricalDataset& hist, const Policy& pi_e,
                                    const NuisanceFitter& fitter, const FoldPartition& folds) {
  if (folds.size() != hist.size() || folds.folds() < 2) {
    throw ValidationError("dr_standard_estimate: partition does not match the data");
  }
  check_policy(pi_e, hist.action_count());
  EstimateReport report;
  std::vector<double> all_terms;
  for (int k = 0; k < folds.folds(); ++k) {
    FitProvenance prov{folds.out_of_fold(k), folds.out_of_fold(k)};
    const HistoricalDataset h_train = hist.subset(prov.hist_rows);
    const NuisanceSet ns =
        fit_fold(fitter, h_train, EvaluationDataset(h_train.covariates()), prov, k);
    if (k == 0) report.diagnostics.bounds = ns.bounds();

    const HistoricalDataset h_eval = hist.subset(folds.in_fold(k));
    const HistTerms t = hist_terms(ns, pi_e, h_eval, &report.diagnostics, false);
    const std::vector<double> v = policy_values(ns, pi_e, h_eval.covariates(), &report.diagnostics);
    double sum = 0.0;
    for (std::size_t i = 0; i < h_eval.size(); ++i) {
      all_terms.push_back(t.residual[i] + v[i]);
      sum += t.residual[i] + v[i];
    }
    report.per_fold.push_back(sum / static_cast<double>(h_eval.size()));
    report.normalizers.push_back(1.0);
    report.provenance.push_back(ns.provenance());
  }
  report.estimate = mean_of(report.per_fold);
  report.variance = sample_variance(all_terms);
  report.standard_error = std::sqrt(report.variance / static_cast<double>(hist.size()));
  return report;
}

// ---------------------------------------------------------------------------

DiscreteLaw tabular_law(const TabularDGP& dgp) {
  return {state_covariates(dgp.states()), dgp.q()};
}

DiscreteLaw quadrature_law_1d(const std::function<double(double)>& density, double lo, double hi,
                              int intervals) {
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw ValidationError("quadrature_law_1d: need a finite interval lo < hi");
  }
  if (intervals < 2) throw ValidationError("quadrature_law_1d: need at least two intervals");
  if (intervals % 2 != 0) ++intervals;
  const double h = (hi - lo) / intervals;
  DiscreteLaw law{Matrix(intervals + 1, 1), Vector(intervals + 1)};
  for (int i = 0; i <= intervals; ++i) {
    const double x = lo + h * i;
    const double c = (i == 0 || i == intervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    const double q = density(x);
    if (!(q >= 0.0) || !std::isfinite(q)) {
      throw ValidationError("quadrature_law_1d: density must be finite and non-negative");
    }
    law.points(i, 0) = x;
    law.weights[i] = c * h / 3.0 * q;
  }
  return law;
}

EstimateReport drcs_known_q(const HistoricalDataset& hist, const DiscreteLaw& law,
                            const Policy& pi_e, const NuisanceFitter& fitter,
                            const CrossFitOptions& options) {
  if (law.points.rows() == 0 || law.points.rows() != law.weights.size()) {
    throw ValidationError("drcs_known_q: law needs one weight per support point");
  }
  if (law.points.cols() != hist.dim()) throw ValidationError("drcs_known_q: dimension mismatch");
  if (options.folds < 2 || static_cast<std::size_t>(options.folds) > hist.size()) {
    throw ValidationError("drcs_known_q: fold count must lie in [2, n_hst]");
  }
  check_policy(pi_e, hist.action_count());
  const FoldPartition folds(hist.size(), options.folds, options.seed);
  const EvaluationDataset support(law.points);
  std::vector<std::size_t> all_points(static_cast<std::size_t>(law.points.rows()));
  std::iota(all_points.begin(), all_points.end(), std::size_t{0});

  EstimateReport report;
  std::vector<double> all_terms;
  for (int k = 0; k < folds.folds(); ++k) {
    FitProvenance prov{folds.out_of_fold(k), all_points};
    const NuisanceSet ns = fit_fold(fitter, hist.subset(prov.hist_rows), support, prov, k);
    if (k == 0) report.diagnostics.bounds = ns.bounds();

    const HistoricalDataset h_eval = hist.subset(folds.in_fold(k));
    const HistTerms t = hist_terms(ns, pi_e, h_eval, &report.diagnostics);
    const std::vector<double> v = policy_values(ns, pi_e, law.points, &report.diagnostics);
    double expectation = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) expectation += law.weights[static_cast<Eigen::Index>(j)] * v[j];
    const double norm = normalizer_of(options.normalizer, t);
    for (double term : t.residual) all_terms.push_back(norm * term);
    report.per_fold.push_back(norm * mean_of(t.residual) + expectation);
    report.normalizers.push_back(norm);
    report.provenance.push_back(ns.provenance());
  }
  report.estimate = mean_of(report.per_fold);
  report.variance = sample_variance(all_terms);
  report.standard_error = std::sqrt(report.variance / static_cast<double>(hist.size()));
  return report;
}

// ---------------------------------------------------------------------------

namespace {

struct TabularPieces {
  Matrix pe;
  Vector v;  // v(x) = sum_a pi_e(a|x) f(a, x)
};

TabularPieces tabular_pieces(const TabularDGP& dgp, const Policy& pi_e) {
  if (pi_e.action_count() != dgp.actions()) {
    throw ValidationError("tabular bound: policy action count does not match the DGP");
  }
  TabularPieces t{policy_table(pi_e, dgp.states()), Vector(dgp.states())};
  dgp.check_overlap(t.pe);
  for (int x = 0; x < dgp.states(); ++x) t.v[x] = t.pe.row(x).dot(dgp.f().row(x));
  return t;
}

double weighted_variance(const Vector& weights, const Vector& values) {
  const double m = weights.dot(values);
  return weights.dot(values.cwiseProduct(values)) - m * m;
}

// E_{p, pi_b}[ (r w)^2 f (1 - f) ], with r replaced by 1 when `with_ratio` is false.
double residual_variance(const TabularDGP& dgp, const Matrix& pe, bool with_ratio) {
  double total = 0.0;
  for (int x = 0; x < dgp.states(); ++x) {
    if (!(dgp.p()[x] > 0.0)) continue;
    const double r = with_ratio ? dgp.ratio(x) : 1.0;
    for (int a = 0; a < dgp.actions(); ++a) {
      const double pb = dgp.pi_b()(x, a);
      if (!(pb > 0.0)) continue;
      const double w = pe(x, a) / pb;
      const double f = dgp.f()(x, a);
      total += dgp.p()[x] * pb * r * r * w * w * f * (1.0 - f);
    }
  }
  return total;
}

}  // namespace

double efficiency_bound_tabular(const TabularDGP& dgp, const Policy& pi_e) {
  const TabularPieces t = tabular_pieces(dgp, pi_e);
  const double rho = dgp.rho();
  return residual_variance(dgp, t.pe, true) / rho + weighted_variance(dgp.q(), t.v) / (1.0 - rho);
}

double no_shift_bound_tabular(const TabularDGP& dgp, const Policy& pi_e) {
  const TabularPieces t = tabular_pieces(dgp, pi_e);
  return residual_variance(dgp, t.pe, false) + weighted_variance(dgp.p(), t.v);
}

double ipwcsb_asymptotic_variance_tabular(const TabularDGP& dgp, const Policy& pi_e) {
  const TabularPieces t = tabular_pieces(dgp, pi_e);
  // Y is Bernoulli, so E[Y^2 | a, x] = f(a, x).
  double first = 0.0;
  double second = 0.0;
  for (int x = 0; x < dgp.states(); ++x) {
    if (!(dgp.p()[x] > 0.0)) continue;
    const double r = dgp.ratio(x);
    const double v = t.v[x];
    for (int a = 0; a < dgp.actions(); ++a) {
      const double pb = dgp.pi_b()(x, a);
      if (!(pb > 0.0)) continue;
      const double w = t.pe(x, a) / pb;
      const double f = dgp.f()(x, a);
      const double mass = dgp.p()[x] * pb;
      first += mass * r * (w * f - v);
      second += mass * r * r * (w * w * f - 2.0 * w * v * f + v * v);
    }
  }
  const double rho = dgp.rho();
  return (second - first * first) / rho + weighted_variance(dgp.q(), t.v) / (1.0 - rho);
}

double known_q_bound_tabular(const TabularDGP& dgp, const Policy& pi_e) {
  const TabularPieces t = tabular_pieces(dgp, pi_e);
  return residual_variance(dgp, t.pe, true);
}

}  // namespace covshift
