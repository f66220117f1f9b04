#include "covshift/opl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "covshift/kernels.hpp"

namespace covshift {

namespace {

void check_parameters(const Matrix& centers, double sigma2, const Matrix& beta, const Vector& beta0) {
  if (centers.rows() == 0) throw ValidationError("softmax policy: at least one center is required");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw ValidationError("softmax policy: sigma2 must be positive and finite");
  }
  if (beta0.size() == 0) throw ValidationError("softmax policy: at least one action is required");
  if (beta.rows() != beta0.size() || beta.cols() != centers.rows()) {
    throw ValidationError("softmax policy: beta must be |A| x m");
  }
  if (!beta.allFinite() || !beta0.allFinite() || !centers.allFinite()) {
    throw ValidationError("softmax policy: parameters must be finite");
  }
}

}  // namespace

SoftmaxKernelPolicy::SoftmaxKernelPolicy(Matrix centers, double sigma2, Matrix beta, Vector beta0)
    : centers_(std::move(centers)), sigma2_(sigma2), beta_(std::move(beta)), beta0_(std::move(beta0)) {
  check_parameters(centers_, sigma2_, beta_, beta0_);
}

SoftmaxKernelPolicy::SoftmaxKernelPolicy(Matrix centers, double sigma2, int action_count)
    : SoftmaxKernelPolicy(centers, sigma2, Matrix::Zero(std::max(action_count, 0), centers.rows()),
                          Vector::Zero(std::max(action_count, 0))) {}

Matrix SoftmaxKernelPolicy::features(const Matrix& x) const {
  if (x.cols() != centers_.cols()) throw ValidationError("softmax policy: covariate dimension mismatch");
  return kernels::gaussian_gram(x, centers_, std::sqrt(sigma2_));
}

void SoftmaxKernelPolicy::probabilities(CovariateView x, std::span<double> out) const {
  const Matrix row = Eigen::Map<const Matrix>(x.data(), 1, static_cast<Eigen::Index>(x.size()));
  const Matrix p = softmax_rows(features(row) * beta_.transpose() + Matrix::Ones(1, 1) * beta0_.transpose());
  for (int a = 0; a < action_count(); ++a) out[static_cast<std::size_t>(a)] = p(0, a);
}

Vector SoftmaxKernelPolicy::parameters() const {
  Vector theta(static_cast<Eigen::Index>(parameter_count()));
  const Eigen::Index m = beta_.cols();
  for (Eigen::Index a = 0; a < beta_.rows(); ++a) theta.segment(a * m, m) = beta_.row(a).transpose();
  theta.tail(beta0_.size()) = beta0_;
  return theta;
}

SoftmaxKernelPolicy SoftmaxKernelPolicy::with_parameters(const Vector& theta) const {
  if (theta.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw ValidationError("softmax policy: parameter vector has the wrong length");
  }
  const Eigen::Index m = beta_.cols();
  Matrix beta(beta_.rows(), m);
  for (Eigen::Index a = 0; a < beta.rows(); ++a) beta.row(a) = theta.segment(a * m, m).transpose();
  return SoftmaxKernelPolicy(centers_, sigma2_, std::move(beta), theta.tail(beta0_.size()));
}

Policy as_policy(const SoftmaxKernelPolicy& model) {
  return Policy(std::make_shared<SoftmaxKernelPolicy>(model));
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw ValidationError(std::string("policy json: ") + what + " must be a nonempty array");
  const std::size_t cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      throw ValidationError(std::string("policy json: ") + what + " rows must have equal length");
    }
    for (std::size_t k = 0; k < cols; ++k) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
    }
  }
  return m;
}

}  // namespace

nlohmann::json to_json(const SoftmaxKernelPolicy& policy) {
  const Vector& b0 = policy.beta0();
  return {{"centers", matrix_json(policy.centers())},
          {"sigma2", policy.sigma2()},
          {"beta", matrix_json(policy.beta())},
          {"beta0", std::vector<double>(b0.begin(), b0.end())},
          {"action_count", policy.action_count()}};
}

SoftmaxKernelPolicy softmax_policy_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> keys = {"centers", "sigma2", "beta", "beta0", "action_count"};
  if (!j.is_object()) throw ValidationError("policy json: expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ValidationError("policy json: unknown key '" + key + "'");
    }
  }
  for (const auto& key : keys) {
    if (!j.contains(key)) throw ValidationError("policy json: missing key '" + key + "'");
  }
  try {
    const std::vector<double> b0 = j.at("beta0").get<std::vector<double>>();
    if (j.at("action_count").get<int>() != static_cast<int>(b0.size())) {
      throw ValidationError("policy json: action_count does not match beta0");
    }
    return SoftmaxKernelPolicy(matrix_from_json(j.at("centers"), "centers"), j.at("sigma2").get<double>(),
                               matrix_from_json(j.at("beta"), "beta"),
                               Eigen::Map<const Vector>(b0.data(), static_cast<Eigen::Index>(b0.size())));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("policy json: ") + e.what());
  }
}

Matrix softmax_rows(const Matrix& scores) {
  Matrix p(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double top = scores.row(i).maxCoeff();
    p.row(i) = (scores.row(i).array() - top).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Matrix select_centers(const Matrix& x, std::size_t max_centers, std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(x.rows());
  if (n == 0 || max_centers == 0) throw ValidationError("select_centers: need at least one row and one center");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  const std::size_t m = std::min(max_centers, n);
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(m);
  return select_rows(x, idx);
}

const char* to_string(OplEstimator kind) {
  switch (kind) {
    case OplEstimator::Drcs:
      return "DRCS";
    case OplEstimator::Ipwcs:
      return "IPWCS";
    case OplEstimator::Dm:
      return "DM";
  }
  return "?";
}

OplEstimator opl_estimator_from_string(const std::string& name) {
  if (name == "DRCS") return OplEstimator::Drcs;
  if (name == "IPWCS") return OplEstimator::Ipwcs;
  if (name == "DM") return OplEstimator::Dm;
  throw ValidationError("unknown estimator '" + name + "' (expected DRCS, IPWCS or DM)");
}

KernelNuisanceConfig default_nuisance_config(OplEstimator kind) {
  KernelNuisanceConfig c;
  switch (kind) {
    case OplEstimator::Drcs:
      break;
    case OplEstimator::Ipwcs:
      c.ratio = RatioMethod::Kde;
      c.behavior = RegressionMethod::NadarayaWatson;
      break;
    case OplEstimator::Dm:
      c.outcome = RegressionMethod::NadarayaWatson;
      break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Objective terms

namespace {

void fill_rows(OplTerms& t, const NuisanceSet& ns, OplEstimator kind, const HistoricalDataset& hist,
               std::span<const std::size_t> hist_rows, double hist_w, const EvaluationDataset& evl,
               std::span<const std::size_t> evl_rows, double evl_w) {
  const double c2 = ns.bounds().weight_max;
  if (!hist_rows.empty()) {
    const Matrix x = select_rows(hist.covariates(), hist_rows);
    const Vector r = ns.ratio(x);
    const Matrix pb = ns.behavior(x);
    const Matrix f = ns.outcome(x);
    for (std::size_t k = 0; k < hist_rows.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const std::size_t i = hist_rows[k];
      const int a = hist.actions()[i];
      const double inv = pb(kk, a) > 0.0 ? std::min(1.0 / pb(kk, a), c2) : c2;
      const double y = hist.rewards()[i];
      double coef = 0.0;
      if (kind == OplEstimator::Drcs) coef = r[kk] * inv * (y - f(kk, a));
      if (kind == OplEstimator::Ipwcs) coef = r[kk] * inv * y;
      t.hist_coef[static_cast<Eigen::Index>(i)] = coef;
      t.hist_weight[static_cast<Eigen::Index>(i)] = hist_w;
    }
  }
  if (!evl_rows.empty()) {
    const Matrix z = select_rows(evl.covariates(), evl_rows);
    const Matrix f = kind == OplEstimator::Ipwcs ? Matrix::Zero(z.rows(), t.action_count) : ns.outcome(z);
    for (std::size_t k = 0; k < evl_rows.size(); ++k) {
      const auto j = static_cast<Eigen::Index>(evl_rows[k]);
      t.evl_coef.row(j) = f.row(static_cast<Eigen::Index>(k));
      t.evl_weight[j] = evl_w;
    }
  }
}

OplTerms empty_terms(const HistoricalDataset& hist, const EvaluationDataset& evl) {
  if (hist.size() == 0 || evl.size() == 0) throw ValidationError("opl: datasets must be nonempty");
  if (hist.dim() != evl.dim()) throw ValidationError("opl: covariate dimensions differ");
  OplTerms t;
  t.action_count = hist.action_count();
  t.hist_x = hist.covariates();
  t.actions = hist.actions();
  t.hist_coef = Vector::Zero(static_cast<Eigen::Index>(hist.size()));
  t.hist_weight = Vector::Zero(static_cast<Eigen::Index>(hist.size()));
  t.evl_x = evl.covariates();
  t.evl_coef = Matrix::Zero(static_cast<Eigen::Index>(evl.size()), t.action_count);
  t.evl_weight = Vector::Zero(static_cast<Eigen::Index>(evl.size()));
  return t;
}

}  // namespace

OplTerms opl_terms(const HistoricalDataset& hist, const EvaluationDataset& evl, const CrossFit& fit,
                   OplEstimator kind) {
  OplTerms t = empty_terms(hist, evl);
  const int folds = fit.hist_folds.folds();
  if (fit.hist_folds.size() != hist.size() || fit.evl_folds.size() != evl.size() ||
      fit.nuisances.size() != static_cast<std::size_t>(folds)) {
    throw ValidationError("opl: cross-fit does not match the data");
  }
  for (int k = 0; k < folds; ++k) {
    const auto h = fit.hist_folds.in_fold(k);
    const auto e = fit.evl_folds.in_fold(k);
    fill_rows(t, fit.nuisances[static_cast<std::size_t>(k)], kind, hist, h,
              1.0 / (folds * static_cast<double>(h.size())), evl, e,
              1.0 / (folds * static_cast<double>(e.size())));
  }
  return t;
}

OplTerms opl_terms(const HistoricalDataset& hist, const EvaluationDataset& evl,
                   const NuisanceSet& nuisances, OplEstimator kind) {
  OplTerms t = empty_terms(hist, evl);
  std::vector<std::size_t> h(hist.size()), e(evl.size());
  std::iota(h.begin(), h.end(), 0);
  std::iota(e.begin(), e.end(), 0);
  fill_rows(t, nuisances, kind, hist, h, 1.0 / static_cast<double>(h.size()), evl, e,
            1.0 / static_cast<double>(e.size()));
  return t;
}

OplTerms subset(const OplTerms& terms, std::span<const std::size_t> hist_rows,
                std::span<const std::size_t> evl_rows) {
  if (hist_rows.empty() || evl_rows.empty()) throw ValidationError("opl: subset must keep rows of both samples");
  OplTerms t;
  t.action_count = terms.action_count;
  t.hist_x = select_rows(terms.hist_x, hist_rows);
  t.evl_x = select_rows(terms.evl_x, evl_rows);
  t.hist_coef.resize(static_cast<Eigen::Index>(hist_rows.size()));
  t.evl_coef.resize(static_cast<Eigen::Index>(evl_rows.size()), terms.action_count);
  for (std::size_t k = 0; k < hist_rows.size(); ++k) {
    t.actions.push_back(terms.actions[hist_rows[k]]);
    t.hist_coef[static_cast<Eigen::Index>(k)] = terms.hist_coef[static_cast<Eigen::Index>(hist_rows[k])];
  }
  for (std::size_t k = 0; k < evl_rows.size(); ++k) {
    t.evl_coef.row(static_cast<Eigen::Index>(k)) = terms.evl_coef.row(static_cast<Eigen::Index>(evl_rows[k]));
  }
  t.hist_weight = Vector::Constant(t.hist_coef.size(), 1.0 / static_cast<double>(hist_rows.size()));
  t.evl_weight = Vector::Constant(t.evl_coef.rows(), 1.0 / static_cast<double>(evl_rows.size()));
  return t;
}

// ---------------------------------------------------------------------------
// Objective and gradient on cached features

namespace {

class Objective {
 public:
  Objective(const OplTerms& terms, const SoftmaxKernelPolicy& shape)
      : terms_(terms),
        shape_(shape),
        phi_h_(shape.features(terms.hist_x)),
        phi_e_(shape.features(terms.evl_x)) {
    if (terms.action_count != shape.action_count()) {
      throw ValidationError("opl: policy action count does not match the data");
    }
  }

  double value(const Vector& theta, double lambda) const {
    const Matrix ph = probs(phi_h_, theta);
    const Matrix pe = probs(phi_e_, theta);
    double v = 0.0;
    for (Eigen::Index i = 0; i < ph.rows(); ++i) {
      v += terms_.hist_weight[i] * terms_.hist_coef[i] * ph(i, terms_.actions[static_cast<std::size_t>(i)]);
    }
    for (Eigen::Index j = 0; j < pe.rows(); ++j) v += terms_.evl_weight[j] * pe.row(j).dot(terms_.evl_coef.row(j));
    return v - lambda * theta.squaredNorm();
  }

  Vector gradient(const Vector& theta, double lambda) const {
    const Eigen::Index na = terms_.action_count;
    const Matrix ph = probs(phi_h_, theta);
    const Matrix pe = probs(phi_e_, theta);
    // dJ/dg for each row and action: pi_A (delta_Ab - pi_b) for the logged
    // action, pi_b (F_b - sum_a F_a pi_a) for the plug-in term.
    Matrix gh(ph.rows(), na);
    for (Eigen::Index i = 0; i < ph.rows(); ++i) {
      const int a = terms_.actions[static_cast<std::size_t>(i)];
      const double s = terms_.hist_weight[i] * terms_.hist_coef[i] * ph(i, a);
      gh.row(i) = -s * ph.row(i);
      gh(i, a) += s;
    }
    Matrix ge(pe.rows(), na);
    for (Eigen::Index j = 0; j < pe.rows(); ++j) {
      const double v = pe.row(j).dot(terms_.evl_coef.row(j));
      ge.row(j) = terms_.evl_weight[j] * pe.row(j).cwiseProduct(terms_.evl_coef.row(j) - Matrix::Constant(1, na, v));
    }
    const Matrix gbeta = gh.transpose() * phi_h_ + ge.transpose() * phi_e_;
    const Eigen::Index m = gbeta.cols();
    Vector g(theta.size());
    for (Eigen::Index a = 0; a < na; ++a) g.segment(a * m, m) = gbeta.row(a).transpose();
    g.tail(na) = (gh.colwise().sum() + ge.colwise().sum()).transpose();
    return g - 2.0 * lambda * theta;
  }

  const SoftmaxKernelPolicy& shape() const { return shape_; }

 private:
  Matrix probs(const Matrix& phi, const Vector& theta) const {
    const Eigen::Index na = terms_.action_count;
    const Eigen::Index m = phi.cols();
    Matrix scores(phi.rows(), na);
    for (Eigen::Index a = 0; a < na; ++a) {
      scores.col(a) = phi * theta.segment(a * m, m);
      scores.col(a).array() += theta[na * m + a];
    }
    return softmax_rows(scores);
  }

  const OplTerms& terms_;
  SoftmaxKernelPolicy shape_;
  Matrix phi_h_;
  Matrix phi_e_;
};

std::string trace_text(const std::vector<double>& trace) {
  std::ostringstream os;
  const std::size_t from = trace.size() > 10 ? trace.size() - 10 : 0;
  os << "objective trace (last " << trace.size() - from << " of " << trace.size() << "):";
  for (std::size_t i = from; i < trace.size(); ++i) os << " [" << i << "] " << trace[i];
  return os.str();
}

OptimizeResult run_ascent(const Objective& obj, Vector theta, double lambda, const OptimizerOptions& o) {
  OptimizeResult res;
  double f = obj.value(theta, lambda);
  res.trace.push_back(f);
  if (!std::isfinite(f)) throw NumericalError("opl optimizer: initial objective is not finite");
  double step = o.step;
  for (int it = 0; it < o.max_iterations; ++it) {
    const Vector g = obj.gradient(theta, lambda);
    const double gn2 = g.squaredNorm();
    res.gradient_norm = std::sqrt(gn2);
    if (!std::isfinite(res.gradient_norm)) {
      throw NumericalError("opl optimizer: gradient is not finite at iteration " + std::to_string(it) + "; " +
                           trace_text(res.trace));
    }
    if (res.gradient_norm < o.tolerance) {
      res.converged = true;
      break;
    }
    Vector next;
    double fn = 0.0;
    if (o.fixed_step) {
      next = theta + o.step * g;
      fn = obj.value(next, lambda);
    } else {
      // Backtracking with a step that may grow again after an easy accept.
      bool accepted = false;
      for (int bt = 0; bt < 60; ++bt) {
        next = theta + step * g;
        fn = obj.value(next, lambda);
        if (std::isfinite(fn) && fn >= f + o.armijo * step * gn2) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        // No representable ascent step along the gradient: stationary to
        // working precision.
        res.converged = true;
        break;
      }
    }
    if (!std::isfinite(fn)) {
      res.trace.push_back(fn);
      throw NumericalError("opl optimizer: objective became non-finite at iteration " + std::to_string(it + 1) +
                           "; " + trace_text(res.trace));
    }
    theta = std::move(next);
    f = fn;
    res.trace.push_back(f);
    res.iterations = it + 1;
    if (!o.fixed_step) step *= 2.0;
  }
  if (!res.converged) {
    const double gn = obj.gradient(theta, lambda).norm();
    res.gradient_norm = gn;
    res.converged = gn < o.tolerance;
  }
  res.theta = std::move(theta);
  res.objective = f;
  return res;
}

}  // namespace

double opl_objective(const SoftmaxKernelPolicy& policy, const OplTerms& terms, double lambda) {
  return Objective(terms, policy).value(policy.parameters(), lambda);
}

Vector opl_gradient(const SoftmaxKernelPolicy& policy, const OplTerms& terms, double lambda) {
  return Objective(terms, policy).gradient(policy.parameters(), lambda);
}

double opl_objective(const SoftmaxKernelPolicy& policy, const HistoricalDataset& hist,
                     const EvaluationDataset& evl, const CrossFit& fit, double lambda) {
  return opl_objective(policy, opl_terms(hist, evl, fit, OplEstimator::Drcs), lambda);
}

Vector opl_gradient(const SoftmaxKernelPolicy& policy, const HistoricalDataset& hist,
                    const EvaluationDataset& evl, const CrossFit& fit, double lambda) {
  return opl_gradient(policy, opl_terms(hist, evl, fit, OplEstimator::Drcs), lambda);
}

OptimizeResult maximize_objective(const SoftmaxKernelPolicy& start, const OplTerms& terms, double lambda,
                                  const OptimizerOptions& options) {
  if (options.max_iterations < 0 || !(options.step > 0.0) || !(options.tolerance >= 0.0)) {
    throw ValidationError("opl optimizer: invalid options");
  }
  const Objective obj(terms, start);
  return run_ascent(obj, start.parameters(), lambda, options);
}

// ---------------------------------------------------------------------------
// Training

void validate(const OplConfig& c) {
  for (double s : c.sigma2_grid) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("opl config: sigma2 values must be positive");
  }
  if (c.lambda_grid.empty()) throw ValidationError("opl config: lambda grid must be nonempty");
  for (double l : c.lambda_grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ValidationError("opl config: lambda values must be >= 0");
  }
  if (c.folds < 2) throw ValidationError("opl config: cross-fitting folds must be at least 2");
  if (c.cv_folds < 2) throw ValidationError("opl config: CV folds must be at least 2");
  if (c.max_centers == 0) throw ValidationError("opl config: max_centers must be positive");
  if (c.optimizer.max_iterations < 0 || !(c.optimizer.step > 0.0) || !(c.optimizer.tolerance >= 0.0)) {
    throw ValidationError("opl config: invalid optimizer settings");
  }
}

TrainResult train_on_terms(const OplTerms& terms, const OplConfig& config) {
  validate(config);
  const std::size_t n_h = static_cast<std::size_t>(terms.hist_x.rows());
  const std::size_t n_e = static_cast<std::size_t>(terms.evl_x.rows());
  if (static_cast<std::size_t>(config.cv_folds) > std::min(n_h, n_e)) {
    throw ValidationError("opl: CV folds exceed the smaller sample size");
  }
  std::vector<double> sigma2_grid = config.sigma2_grid;
  if (sigma2_grid.empty()) {
    const double d = kernels::median_pairwise_distance(terms.hist_x);
    sigma2_grid = {0.5 * d * d, d * d, 2.0 * d * d};
  }
  const Matrix centers = select_centers(terms.hist_x, config.max_centers, config.seed);
  const FoldPartition hcv(n_h, config.cv_folds, config.seed ^ 0xC3A5C85C97CB3127ULL);
  const FoldPartition ecv(n_e, config.cv_folds, config.seed ^ 0xB492B66FBE98F273ULL);

  std::vector<OplTerms> train, held;
  for (int l = 0; l < config.cv_folds; ++l) {
    train.push_back(subset(terms, hcv.out_of_fold(l), ecv.out_of_fold(l)));
    held.push_back(subset(terms, hcv.in_fold(l), ecv.in_fold(l)));
  }

  std::vector<CvScore> scores;
  for (double s2 : sigma2_grid) {
    for (double lam : config.lambda_grid) scores.push_back({s2, lam, 0.0, {}});
  }

  std::vector<std::string> errors(scores.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t g = 0; g < scores.size(); ++g) {
    try {
      CvScore& cs = scores[g];
      const SoftmaxKernelPolicy start(centers, cs.sigma2, terms.action_count);
      for (int l = 0; l < config.cv_folds; ++l) {
        const Objective fit_obj(train[static_cast<std::size_t>(l)], start);
        const OptimizeResult r = run_ascent(fit_obj, start.parameters(), cs.lambda, config.optimizer);
        const Objective score_obj(held[static_cast<std::size_t>(l)], start);
        const double s = score_obj.value(r.theta, 0.0);
        cs.fold_scores.push_back(s);
        cs.score += s;
      }
    } catch (const std::exception& e) {
      errors[g] = e.what();
    }
  }
  for (std::size_t g = 0; g < errors.size(); ++g) {
    if (!errors[g].empty()) {
      std::ostringstream os;
      os << "opl: training at sigma2=" << scores[g].sigma2 << ", lambda=" << scores[g].lambda
         << " failed: " << errors[g];
      throw NumericalError(os.str());
    }
  }

  std::size_t best = 0;
  for (std::size_t g = 1; g < scores.size(); ++g) {
    if (scores[g].score > scores[best].score) best = g;
  }
  const SoftmaxKernelPolicy start(centers, scores[best].sigma2, terms.action_count);
  const Objective full(terms, start);
  OptimizeResult fit = run_ascent(full, start.parameters(), scores[best].lambda, config.optimizer);
  SoftmaxKernelPolicy policy = start.with_parameters(fit.theta);
  return {std::move(policy), scores[best].sigma2, scores[best].lambda, std::move(scores),
          hcv.assignment(),  ecv.assignment(), std::move(fit)};
}

TrainResult train_policy(const HistoricalDataset& hist, const EvaluationDataset& evl,
                         const OplConfig& config, OplEstimator kind, const NuisanceFitter& fitter) {
  validate(config);
  if (hist.size() == 0 || evl.size() == 0) throw ValidationError("opl: datasets must be nonempty");
  OplTerms terms;
  if (kind == OplEstimator::Drcs) {
    terms = opl_terms(hist, evl, cross_fit(hist, evl, fitter, config.folds, config.seed), kind);
  } else {
    terms = opl_terms(hist, evl, fitter(hist, evl), kind);
  }
  return train_on_terms(terms, config);
}

TrainResult train_policy(const HistoricalDataset& hist, const EvaluationDataset& evl,
                         const OplConfig& config, OplEstimator kind) {
  return train_policy(hist, evl, config, kind, kernel_nuisance_fitter(default_nuisance_config(kind)));
}

}  // namespace covshift
