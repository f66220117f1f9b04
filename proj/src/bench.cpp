#include "covshift/bench.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace covshift {

namespace {

[[noreturn]] void parse_error(const std::string& source, std::size_t line, const std::string& what) {
  throw ValidationError(source + ":" + std::to_string(line) + ": " + what);
}

double parse_number(const std::string& token, const std::string& source, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    parse_error(source, line, "cannot parse number '" + token + "'");
  }
  if (used != token.size() || !std::isfinite(v)) parse_error(source, line, "cannot parse number '" + token + "'");
  return v;
}

}  // namespace

LabeledDataset parse_libsvm(std::istream& in, const LibsvmOptions& options, const std::string& source) {
  struct Row {
    double label;
    std::vector<std::pair<Eigen::Index, double>> features;
  };
  std::vector<Row> rows;
  Eigen::Index max_index = 0;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    const auto hash = text.find('#');
    if (hash != std::string::npos) text.erase(hash);
    std::istringstream ls(text);
    std::string token;
    if (!(ls >> token)) continue;
    Row row{parse_number(token, source, line_no), {}};
    Eigen::Index last = 0;
    while (ls >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos) parse_error(source, line_no, "expected index:value, got '" + token + "'");
      const double idx = parse_number(token.substr(0, colon), source, line_no);
      if (idx < 1 || idx != std::floor(idx)) parse_error(source, line_no, "feature index must be a positive integer");
      const auto j = static_cast<Eigen::Index>(idx);
      if (j <= last) parse_error(source, line_no, "feature indices must be strictly increasing");
      if (options.dim > 0 && j > options.dim) {
        parse_error(source, line_no,
                    "feature index " + std::to_string(j) + " exceeds dimension " + std::to_string(options.dim));
      }
      last = j;
      row.features.emplace_back(j, parse_number(token.substr(colon + 1), source, line_no));
    }
    max_index = std::max(max_index, last);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError(source + ": no data rows");
  const Eigen::Index d = options.dim > 0 ? options.dim : max_index;
  if (d == 0) throw ValidationError(source + ": no features");

  LabeledDataset out;
  std::set<double> distinct;
  for (const Row& r : rows) distinct.insert(r.label);
  out.label_values.assign(distinct.begin(), distinct.end());
  out.class_count = static_cast<int>(out.label_values.size());
  out.x = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), d);
  out.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto it = std::lower_bound(out.label_values.begin(), out.label_values.end(), rows[i].label);
    out.labels[i] = static_cast<int>(it - out.label_values.begin());
    for (const auto& [j, v] : rows[i].features) out.x(static_cast<Eigen::Index>(i), j - 1) = v;
  }
  if (options.standardize) {
    const double n = static_cast<double>(out.x.rows());
    for (Eigen::Index j = 0; j < d; ++j) {
      const double mean = out.x.col(j).mean();
      out.x.col(j).array() -= mean;
      const double sd = std::sqrt(out.x.col(j).squaredNorm() / n);
      if (sd > 1e-12) out.x.col(j) /= sd;
    }
  }
  return out;
}

LabeledDataset load_libsvm(const std::string& path, const LibsvmOptions& options) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return parse_libsvm(in, options, path);
}

// ---------------------------------------------------------------------------

Vector shift_scores(const Vector& tau, const Vector& noise) {
  if (tau.size() != noise.size()) throw ValidationError("shift_scores: size mismatch");
  return (tau - noise).unaryExpr([](double t) { return 1.0 / (1.0 + std::exp(-t)); });
}

double expected_hist_fraction(const Vector& scores, double c_prob) {
  return (c_prob * scores.array()).min(1.0).mean();
}

double calibrate_c_prob(const Vector& scores, double target, double tolerance) {
  if (!(target > 0.0 && target < 1.0)) throw ValidationError("covariate shift: target fraction must lie in (0, 1)");
  if (scores.size() == 0) throw ValidationError("covariate shift: no rows");
  double lo = 0.0, hi = 1.0;
  int doublings = 0;
  while (expected_hist_fraction(scores, hi) < target) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 1100 || !std::isfinite(hi)) {
      throw NumericalError("covariate shift: C_prob calibration fails to bracket the target fraction");
    }
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double e = expected_hist_fraction(scores, mid);
    if (std::abs(e - target) <= tolerance) return mid;
    (e < target ? lo : hi) = mid;
  }
  const double c = 0.5 * (lo + hi);
  if (std::abs(expected_hist_fraction(scores, c) - target) > 0.005) {
    throw NumericalError("covariate shift: C_prob calibration did not reach the target fraction");
  }
  return c;
}

namespace {

ShiftSplit assign_rows(const Vector& prob, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ShiftSplit s;
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    (u(rng) < prob[i] ? s.hist_rows : s.evl_rows).push_back(static_cast<std::size_t>(i));
  }
  s.expected_fraction = prob.mean();
  s.realized_fraction = static_cast<double>(s.hist_rows.size()) / static_cast<double>(prob.size());
  return s;
}

}  // namespace

ShiftSplit covariate_shift_split(const Matrix& x, double target_hist_fraction, double noise_scale,
                                 std::uint64_t seed) {
  if (x.cols() < 5) throw ValidationError("covariate shift: at least 5 covariates are required");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Vector noise(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) noise[i] = noise_scale * g(rng);
  const Vector tau = x.leftCols(5).rowwise().sum();
  const Vector s = shift_scores(tau, noise);
  const double c = calibrate_c_prob(s, target_hist_fraction);
  ShiftSplit split = assign_rows((c * s.array()).min(1.0).matrix(), rng);
  split.c_prob = c;
  return split;
}

ShiftSplit random_split(std::size_t n, double target_hist_fraction, std::uint64_t seed) {
  if (!(target_hist_fraction > 0.0 && target_hist_fraction < 1.0)) {
    throw ValidationError("random split: target fraction must lie in (0, 1)");
  }
  std::mt19937_64 rng(seed);
  ShiftSplit split = assign_rows(Vector::Constant(static_cast<Eigen::Index>(n), target_hist_fraction), rng);
  split.c_prob = 1.0;
  return split;
}

// ---------------------------------------------------------------------------

LogisticModel::LogisticModel(Matrix weights, Vector intercepts)
    : weights_(std::move(weights)), intercepts_(std::move(intercepts)) {
  if (weights_.cols() != intercepts_.size()) throw ValidationError("logistic model: shape mismatch");
}

Matrix LogisticModel::predict_proba(const Matrix& x) const {
  if (x.cols() != weights_.rows()) throw ValidationError("logistic model: covariate dimension mismatch");
  Matrix scores = x * weights_;
  scores.rowwise() += intercepts_.transpose();
  return softmax_rows(scores);
}

int LogisticModel::predict(CovariateView x) const {
  if (static_cast<Eigen::Index>(x.size()) != weights_.rows()) {
    throw ValidationError("logistic model: covariate dimension mismatch");
  }
  const Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const Vector s = weights_.transpose() * xv + intercepts_;
  Eigen::Index best = 0;
  s.maxCoeff(&best);
  return static_cast<int>(best);
}

LogisticModel fit_logistic(const Matrix& x, const std::vector<int>& labels, int class_count,
                           const LogisticOptions& options) {
  const Eigen::Index n = x.rows(), d = x.cols();
  if (n == 0 || static_cast<std::size_t>(n) != labels.size()) throw ValidationError("logistic: bad training data");
  if (class_count < 1) throw ValidationError("logistic: class count must be positive");
  if (options.iterations < 0 || !(options.l2 >= 0.0)) throw ValidationError("logistic: invalid options");
  Matrix y = Matrix::Zero(n, class_count);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = labels[static_cast<std::size_t>(i)];
    if (c < 0 || c >= class_count) throw ValidationError("logistic: label out of range");
    y(i, c) = 1.0;
  }
  Matrix xt(n, d + 1);
  xt << x, Vector::Ones(n);
  // The softmax Hessian is bounded by (1/2) X^T X / n per class.
  const Matrix gram = xt.transpose() * xt / static_cast<double>(n);
  const double lmax = Eigen::SelfAdjointEigenSolver<Matrix>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const double step = 1.0 / (0.5 * lmax + options.l2);
  Matrix w = Matrix::Zero(d + 1, class_count);
  for (int it = 0; it < options.iterations; ++it) {
    const Matrix p = softmax_rows(xt * w);
    Matrix grad = xt.transpose() * (p - y) / static_cast<double>(n);
    grad.topRows(d) += options.l2 * w.topRows(d);
    w -= step * grad;
    if (!w.allFinite()) throw NumericalError("logistic: training diverged at iteration " + std::to_string(it));
  }
  return LogisticModel(w.topRows(d), w.row(d).transpose());
}

BenchPolicies build_policies(const Matrix& x, const std::vector<int>& labels, int class_count, double alpha,
                             const LogisticOptions& options) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("build_policies: alpha must lie in [0, 1]");
  if (std::set<int>(labels.begin(), labels.end()).size() < 2) {
    throw ValidationError("build_policies: historical rows need at least two classes");
  }
  const auto model = std::make_shared<const LogisticModel>(fit_logistic(x, labels, class_count, options));
  const Policy det = function_policy(
      class_count,
      [model](CovariateView z, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        out[static_cast<std::size_t>(model->predict(z))] = 1.0;
      },
      x.cols());
  return {det, mixture_policy(det, 1.0 - alpha), mixture_policy(det, 0.1)};
}

double label_reward(const Policy& pi, const Matrix& z, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(z.rows()) != labels.size() || labels.empty()) {
    throw ValidationError("label_reward: need one label per row");
  }
  const Matrix p = pi.prob_matrix(z);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < z.rows(); ++j) sum += p(j, labels[static_cast<std::size_t>(j)]);
  return sum / static_cast<double>(z.rows());
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

template <class T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

NuisanceSet fit_config(const HistoricalDataset& hist, const EvaluationDataset& evl, RatioMethod ratio,
                       RegressionMethod behavior, RegressionMethod outcome) {
  KernelNuisanceConfig c;
  c.ratio = ratio;
  c.behavior = behavior;
  c.outcome = outcome;
  return kernel_nuisance_fitter(c)(hist, evl);
}

EstimateReport value_only(double v) {
  EstimateReport r;
  r.estimate = v;
  return r;
}

using DataEstimator = std::function<EstimateReport(const HistoricalDataset&, const EvaluationDataset&,
                                                   const Policy&, int, std::uint64_t)>;

const std::map<std::string, DataEstimator>& data_estimators() {
  using R = RatioMethod;
  using G = RegressionMethod;
  const auto drcs = [](Normalizer norm) {
    return [norm](const HistoricalDataset& h, const EvaluationDataset& e, const Policy& pi, int folds,
                  std::uint64_t seed) {
      CrossFitOptions o;
      o.folds = folds;
      o.seed = seed;
      o.normalizer = norm;
      return drcs_estimate(h, e, pi, kernel_nuisance_fitter({}), o);
    };
  };
  const auto ipw = [](R ratio, bool normalized) {
    return [ratio, normalized](const HistoricalDataset& h, const EvaluationDataset& e, const Policy& pi, int,
                               std::uint64_t) {
      const NuisanceSet ns = fit_config(h, e, ratio, G::NadarayaWatson, G::NadarayaWatson);
      return value_only(normalized ? ipwcs_sn_estimate(ns, pi, h) : ipwcs_estimate(ns, pi, h));
    };
  };
  const auto dm = [](G outcome) {
    return [outcome](const HistoricalDataset& h, const EvaluationDataset& e, const Policy& pi, int,
                     std::uint64_t) {
      std::shared_ptr<const ActionModel> f;
      if (outcome == G::KernelRidge) {
        f = fit_outcome_krr(h);
      } else {
        f = fit_outcome_nw(h);
      }
      NuisanceBounds bounds;
      bounds.reward_max = h.r_max();
      return value_only(dm_estimate(NuisanceSet(constant_ratio(1.0), f, f, bounds), pi, e));
    };
  };
  static const std::map<std::string, DataEstimator> r = {
      {"DRCS", drcs(Normalizer::None)},
      {"DRCS-SN", drcs(Normalizer::InversePropensity)},
      {"IPWCS", ipw(R::Kde, false)},
      {"IPWCS-SN", ipw(R::Kde, true)},
      {"IPWCS-R", ipw(R::Kulsif, false)},
      {"DM", dm(G::NadarayaWatson)},
      {"DM-R", dm(G::KernelRidge)},
  };
  return r;
}

const std::map<std::string, OpeEstimator>& registry() {
  static const std::map<std::string, OpeEstimator> r = [] {
    std::map<std::string, OpeEstimator> m;
    for (const auto& [name, fn] : data_estimators()) {
      m[name] = [fn](const OpeInstance& in, std::uint64_t seed) {
        return fn(in.hist, in.evl, in.policies.evaluation, in.folds, seed).estimate;
      };
    }
    m["ORACLE"] = [](const OpeInstance& in, std::uint64_t) { return in.truth; };
    m["IPW-TRUE"] = [](const OpeInstance& in, std::uint64_t) {
      return ipwcsb_estimate(*constant_ratio(1.0), in.policies.behavior, in.policies.evaluation, in.hist);
    };
    return m;
  }();
  return r;
}

void summarize(ResultRow& row, const std::vector<double>& values, const std::vector<std::string>& errors) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (errors[i].empty()) {
      row.per_rep.push_back(values[i]);
    } else {
      ++row.failures;
      if (row.first_error.empty()) row.first_error = errors[i];
    }
  }
  row.n_reps = static_cast<int>(row.per_rep.size());
  if (row.n_reps == 0) {
    row.value = row.sd = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  const double n = row.n_reps;
  row.value = std::accumulate(row.per_rep.begin(), row.per_rep.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : row.per_rep) ss += (v - row.value) * (v - row.value);
  row.sd = row.n_reps > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

}  // namespace

void validate(const BenchConfig& c) {
  if (c.alphas.empty()) throw ValidationError("bench config: alphas must be nonempty");
  for (double a : c.alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("bench config: alpha must lie in [0, 1]");
  }
  if (c.sample_size < 4) throw ValidationError("bench config: sample_size must be at least 4");
  if (c.replications < 1) throw ValidationError("bench config: replications must be positive");
  if (!(c.hist_fraction > 0.0 && c.hist_fraction < 1.0)) {
    throw ValidationError("bench config: hist_fraction must lie in (0, 1)");
  }
  if (!(c.noise_scale >= 0.0)) throw ValidationError("bench config: noise_scale must be >= 0");
  if (c.folds < 2) throw ValidationError("bench config: folds must be at least 2");
  for (const auto& e : c.estimators) {
    if (!registry().count(e)) throw ValidationError("bench config: unknown estimator '" + e + "'");
  }
  for (const auto& e : c.opl_estimators) opl_estimator_from_string(e);
  validate(c.opl);
}

OpeInstance make_instance(const LabeledDataset& data, const BenchConfig& config, double alpha, int replication) {
  if (config.sample_size > data.size()) throw ValidationError("bench: sample_size exceeds the dataset");
  const auto rep = static_cast<std::uint64_t>(replication);
  std::mt19937_64 rng(stream_seed(config.seed, rep, 0));
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(config.sample_size);
  const Matrix x = select_rows(data.x, rows);
  const std::vector<int> labels = pick(data.labels, rows);

  ShiftSplit split = config.shift
                         ? covariate_shift_split(x, config.hist_fraction, config.noise_scale, stream_seed(config.seed, rep, 1))
                         : random_split(x.rows(), config.hist_fraction, stream_seed(config.seed, rep, 1));
  if (split.hist_rows.size() < 2 || split.evl_rows.size() < 2) {
    throw ValidationError("bench: split left fewer than two rows on one side");
  }
  const Matrix xh = select_rows(x, split.hist_rows);
  const std::vector<int> yh = pick(labels, split.hist_rows);
  BenchPolicies pol = build_policies(xh, yh, data.class_count, alpha, config.logistic);

  std::mt19937_64 arng(stream_seed(config.seed, rep, 2 + std::bit_cast<std::uint64_t>(alpha)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Matrix pb = pol.behavior.prob_matrix(xh);
  std::vector<int> actions(yh.size());
  std::vector<double> rewards(yh.size());
  for (Eigen::Index i = 0; i < pb.rows(); ++i) {
    const double draw = u(arng);
    double acc = 0.0;
    int a = data.class_count - 1;
    for (int k = 0; k < data.class_count; ++k) {
      acc += pb(i, k);
      if (draw < acc) {
        a = k;
        break;
      }
    }
    actions[static_cast<std::size_t>(i)] = a;
    rewards[static_cast<std::size_t>(i)] = a == yh[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  }
  const Matrix z = select_rows(x, split.evl_rows);
  std::vector<int> yz = pick(labels, split.evl_rows);
  const double truth = label_reward(pol.evaluation, z, yz);
  return {HistoricalDataset(xh, std::move(actions), std::move(rewards), data.class_count),
          EvaluationDataset(z),
          std::move(yz),
          std::move(pol),
          std::move(split),
          truth,
          config.folds};
}

OpeEstimator ope_estimator(const std::string& name) {
  const auto it = registry().find(name);
  if (it == registry().end()) throw ValidationError("unknown OPE estimator '" + name + "'");
  return it->second;
}

EstimateReport estimate_by_name(const std::string& name, const HistoricalDataset& hist,
                                const EvaluationDataset& evl, const Policy& pi_e, int folds,
                                std::uint64_t seed) {
  const auto it = data_estimators().find(name);
  if (it == data_estimators().end()) throw ValidationError("unknown estimator '" + name + "'");
  return it->second(hist, evl, pi_e, folds, seed);
}

std::vector<std::string> data_estimator_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : data_estimators()) out.push_back(k);
  return out;
}

std::vector<std::string> ope_estimator_names() {
  std::vector<std::string> out;
  for (const auto& [k, v] : registry()) out.push_back(k);
  return out;
}

std::vector<ResultRow> run_ope_experiment(const LabeledDataset& data, const BenchConfig& config) {
  validate(config);
  std::vector<ResultRow> out;
  const std::size_t ne = config.estimators.size();
  for (double alpha : config.alphas) {
    const auto reps = static_cast<std::size_t>(config.replications);
    std::vector<std::vector<double>> err(ne, std::vector<double>(reps, 0.0));
    std::vector<std::vector<std::string>> msg(ne, std::vector<std::string>(reps));
#pragma omp parallel for schedule(dynamic)
    for (std::size_t r = 0; r < reps; ++r) {
      try {
        const OpeInstance in = make_instance(data, config, alpha, static_cast<int>(r));
        for (std::size_t e = 0; e < ne; ++e) {
          try {
            const double est = ope_estimator(config.estimators[e])(in, stream_seed(config.seed, r, 3));
            if (!std::isfinite(est)) throw NumericalError("estimate is not finite");
            err[e][r] = (est - in.truth) * (est - in.truth);
          } catch (const std::exception& ex) {
            msg[e][r] = ex.what();
          }
        }
      } catch (const std::exception& ex) {
        for (std::size_t e = 0; e < ne; ++e) msg[e][r] = std::string("replication setup: ") + ex.what();
      }
    }
    for (std::size_t e = 0; e < ne; ++e) {
      ResultRow row;
      row.dataset = config.dataset;
      row.alpha = alpha;
      row.estimator = config.estimators[e];
      row.seed = config.seed;
      summarize(row, err[e], msg[e]);
      out.push_back(std::move(row));
    }
  }
  return out;
}

std::vector<ResultRow> run_opl_experiment(const LabeledDataset& data, const BenchConfig& config) {
  validate(config);
  std::vector<ResultRow> out;
  const std::size_t ne = config.opl_estimators.size();
  for (double alpha : config.alphas) {
    const auto reps = static_cast<std::size_t>(config.replications);
    std::vector<std::vector<double>> rwd(ne, std::vector<double>(reps, 0.0));
    std::vector<std::vector<std::string>> msg(ne, std::vector<std::string>(reps));
#pragma omp parallel for schedule(dynamic)
    for (std::size_t r = 0; r < reps; ++r) {
      try {
        const OpeInstance in = make_instance(data, config, alpha, static_cast<int>(r));
        OplConfig oc = config.opl;
        oc.folds = config.folds;
        oc.seed = stream_seed(config.seed, r, 4);
        for (std::size_t e = 0; e < ne; ++e) {
          try {
            const TrainResult t = train_policy(in.hist, in.evl, oc, opl_estimator_from_string(config.opl_estimators[e]));
            rwd[e][r] = label_reward(as_policy(t.policy), in.evl.covariates(), in.evl_labels);
          } catch (const std::exception& ex) {
            msg[e][r] = ex.what();
          }
        }
      } catch (const std::exception& ex) {
        for (std::size_t e = 0; e < ne; ++e) msg[e][r] = std::string("replication setup: ") + ex.what();
      }
    }
    for (std::size_t e = 0; e < ne; ++e) {
      ResultRow row;
      row.dataset = config.dataset;
      row.alpha = alpha;
      row.estimator = config.opl_estimators[e];
      row.seed = config.seed;
      summarize(row, rwd[e], msg[e]);
      out.push_back(std::move(row));
    }
  }
  return out;
}

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows, bool timestamp) {
  if (timestamp) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    out << "# generated " << buf << "\n";
  }
  out << "dataset,alpha,estimator,mse_or_rwd,sd,n_reps,seed\n";
  char line[256];
  for (const ResultRow& r : rows) {
    std::snprintf(line, sizeof line, "%.2f,%s,%.6f,%.6f,%d,%llu", r.alpha, r.estimator.c_str(), r.value, r.sd,
                  r.n_reps, static_cast<unsigned long long>(r.seed));
    out << r.dataset << "," << line << "\n";
  }
}

nlohmann::json to_json(const std::vector<ResultRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const ResultRow& r : rows) {
    nlohmann::json j = {{"dataset", r.dataset},   {"alpha", r.alpha}, {"estimator", r.estimator},
                        {"mse_or_rwd", r.value},  {"sd", r.sd},       {"n_reps", r.n_reps},
                        {"failures", r.failures}, {"seed", r.seed},   {"per_rep", r.per_rep}};
    if (!r.first_error.empty()) j["first_error"] = r.first_error;
    if (!std::isfinite(r.value)) j["mse_or_rwd"] = nullptr;
    if (!std::isfinite(r.sd)) j["sd"] = nullptr;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace covshift
