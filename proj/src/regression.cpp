#include "covshift/regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "covshift/kernels.hpp"

namespace covshift {

namespace {

double resolve_bandwidth(double requested, const Matrix& x) {
  if (requested > 0.0) return requested;
  if (requested < 0.0 || std::isnan(requested)) throw ValidationError("bandwidth must be positive");
  return kernels::median_pairwise_distance(x);
}

void check_ridge(double requested, const char* who) {
  if (requested < 0.0 || std::isnan(requested)) throw ValidationError(std::string(who) + ": ridge must be positive");
}

double chosen_ridge(double requested, const Matrix& gram, const Matrix& targets) {
  return requested > 0.0 ? requested : loo_ridge(gram, targets);
}

// Solves (K + ridge I) X = rhs; returns X and the relative residual.
std::pair<Matrix, double> ridge_solve(const Matrix& gram, double ridge, const Matrix& rhs) {
  Matrix system = gram;
  system.diagonal().array() += ridge;
  Eigen::LLT<Matrix> llt(system);
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "kernel ridge: system not positive definite (ridge " << ridge << ")";
    throw NumericalError(msg.str());
  }
  Matrix sol = llt.solve(rhs);
  const double denom = std::max(rhs.norm(), 1e-300);
  const double residual = (system * sol - rhs).norm() / denom;
  return {std::move(sol), rhs.norm() == 0.0 ? 0.0 : residual};
}

}  // namespace

std::vector<double> default_ridge_grid() {
  std::vector<double> grid;
  for (int k = -12; k <= 12; ++k) grid.push_back(std::pow(10.0, k / 4.0));
  return grid;
}

std::vector<double> loo_errors(const Matrix& gram, const Matrix& targets, const std::vector<double>& grid) {
  if (gram.rows() != gram.cols() || gram.rows() != targets.rows()) {
    throw ValidationError("loo_errors: gram and targets must have matching rows");
  }
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericalError("loo_errors: eigendecomposition failed");
  const Matrix& u = eig.eigenvectors();
  const Vector s = eig.eigenvalues().cwiseMax(0.0);
  const Matrix uty = u.transpose() * targets;
  const Matrix u2 = u.array().square().matrix();
  std::vector<double> out;
  for (double lambda : grid) {
    if (!(lambda > 0.0)) throw ValidationError("loo_errors: ridge values must be positive");
    const Vector shrink = s.array() / (s.array() + lambda);
    const Matrix fitted = u * (shrink.asDiagonal() * uty);
    const Vector hat = u2 * shrink;
    double err = 0.0;
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
      err += ((targets.row(i) - fitted.row(i)) / (1.0 - hat[i])).squaredNorm();
    }
    out.push_back(err / static_cast<double>(targets.rows()));
  }
  return out;
}

double loo_ridge(const Matrix& gram, const Matrix& targets, const std::vector<double>& grid) {
  if (grid.empty()) throw ValidationError("loo_ridge: empty grid");
  if (gram.rows() < 2) return grid.back();
  const std::vector<double> err = loo_errors(gram, targets, grid);
  return grid[static_cast<std::size_t>(std::min_element(err.begin(), err.end()) - err.begin())];
}

KernelRidgeModel::KernelRidgeModel(std::vector<PerAction> per_action, double bandwidth, double ridge,
                                   double reward_max)
    : per_action_(std::move(per_action)), bandwidth_(bandwidth), ridge_(ridge), reward_max_(reward_max) {}

Matrix KernelRidgeModel::predict(const Matrix& x) const {
  Matrix out(x.rows(), action_count());
  for (int a = 0; a < action_count(); ++a) {
    const auto& pa = per_action_[static_cast<std::size_t>(a)];
    if (pa.centers.rows() == 0) {
      out.col(a).setConstant(pa.mean);
    } else {
      out.col(a) = (kernels::gaussian_gram(x, pa.centers, bandwidth_) * pa.alpha).array() + pa.mean;
    }
  }
  return out.unaryExpr([this](double v) { return clip(v, 0.0, reward_max_); });
}

std::shared_ptr<const KernelRidgeModel> fit_outcome_krr(const HistoricalDataset& data,
                                                        const KernelRidgeOptions& options) {
  if (data.size() == 0) throw ValidationError("fit_outcome_krr: empty dataset");
  check_ridge(options.ridge, "fit_outcome_krr");
  const double bw = resolve_bandwidth(options.bandwidth, data.covariates());
  const auto& y = data.rewards();
  const double global_mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());

  std::vector<KernelRidgeModel::PerAction> per_action(static_cast<std::size_t>(data.action_count()));
  for (int a = 0; a < data.action_count(); ++a) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.actions()[i] == a) rows.push_back(i);
    }
    auto& pa = per_action[static_cast<std::size_t>(a)];
    if (rows.empty()) {
      pa.mean = global_mean;
      continue;
    }
    pa.centers = select_rows(data.covariates(), rows);
    Vector target(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) target[static_cast<Eigen::Index>(r)] = y[rows[r]];
    pa.mean = target.mean();
    target.array() -= pa.mean;
    const Matrix gram = kernels::gaussian_gram(pa.centers, pa.centers, bw);
    pa.ridge = chosen_ridge(options.ridge, gram, target);
    auto [sol, residual] = ridge_solve(gram, pa.ridge, target);
    pa.alpha = sol.col(0);
    pa.relative_residual = residual;
  }
  return std::make_shared<KernelRidgeModel>(std::move(per_action), bw, options.ridge,
                                            options.reward_max > 0.0 ? options.reward_max : data.r_max());
}

// ---------------------------------------------------------------------------

void clamp_renormalize(std::span<double> v, double floor) {
  const std::size_t k = v.size();
  if (k == 0) return;
  if (floor < 0.0 || floor * static_cast<double>(k) > 1.0 + 1e-12) {
    throw ValidationError("clamp_renormalize: floor * |A| must not exceed 1");
  }
  for (auto& x : v) x = std::clamp(x, 0.0, 1.0);
  // Entries that would land under the floor after rescaling are pinned to it
  // and the rest share the remaining mass in proportion; repeat until stable.
  std::vector<bool> pinned(k, false);
  std::size_t n_pinned = 0;
  for (;;) {
    double free_sum = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      if (!pinned[a]) free_sum += v[a];
    }
    const double free_mass = 1.0 - static_cast<double>(n_pinned) * floor;
    const auto scaled = [&](std::size_t a) {
      return free_sum > 0.0 ? v[a] * free_mass / free_sum : free_mass / static_cast<double>(k - n_pinned);
    };
    bool changed = false;
    for (std::size_t a = 0; a < k; ++a) {
      if (!pinned[a] && scaled(a) < floor) {
        pinned[a] = true;
        ++n_pinned;
        changed = true;
      }
    }
    if (!changed) {
      for (std::size_t a = 0; a < k; ++a) v[a] = pinned[a] ? floor : scaled(a);
      return;
    }
  }
}

BehaviorKrrModel::BehaviorKrrModel(Matrix centers, Matrix alpha, Vector means, double bandwidth,
                                   double floor, double relative_residual, double ridge)
    : centers_(std::move(centers)),
      alpha_(std::move(alpha)),
      means_(std::move(means)),
      bandwidth_(bandwidth),
      floor_(floor),
      relative_residual_(relative_residual),
      ridge_(ridge) {}

Matrix BehaviorKrrModel::predict(const Matrix& x) const {
  const auto k = static_cast<Eigen::Index>(means_.size());
  Matrix out(x.rows(), k);
  if (k == 1) {
    out.setOnes();
    return out;
  }
  if (centers_.rows() == 0) {
    out.rowwise() = means_.transpose();
  } else {
    out = kernels::gaussian_gram(x, centers_, bandwidth_) * alpha_;
    out.rowwise() += means_.transpose();
  }
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    clamp_renormalize({out.data() + i * k, static_cast<std::size_t>(k)}, floor_);
  }
  return out;
}

std::shared_ptr<const BehaviorKrrModel> fit_behavior_krr(const HistoricalDataset& data,
                                                         const BehaviorOptions& options) {
  if (data.size() == 0) throw ValidationError("fit_behavior_krr: empty dataset");
  check_ridge(options.ridge, "fit_behavior_krr");
  const int k = data.action_count();
  if (k == 1) {
    return std::make_shared<BehaviorKrrModel>(Matrix(0, data.dim()), Matrix(0, 1), Vector::Ones(1),
                                              1.0, options.floor, 0.0, 0.0);
  }
  const double bw = resolve_bandwidth(options.bandwidth, data.covariates());
  const auto n = static_cast<Eigen::Index>(data.size());
  Matrix indicators = Matrix::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) indicators(i, data.actions()[static_cast<std::size_t>(i)]) = 1.0;
  Vector means = indicators.colwise().mean().transpose();
  indicators.rowwise() -= means.transpose();
  const Matrix gram = kernels::gaussian_gram(data.covariates(), data.covariates(), bw);
  const double ridge = chosen_ridge(options.ridge, gram, indicators);
  auto [alpha, residual] = ridge_solve(gram, ridge, indicators);
  return std::make_shared<BehaviorKrrModel>(data.covariates(), std::move(alpha), std::move(means), bw,
                                            options.floor, residual, ridge);
}

// ---------------------------------------------------------------------------

NadarayaWatsonModel::NadarayaWatsonModel(HistoricalDataset data, double bandwidth, bool fallback)
    : data_(std::move(data)), bandwidth_(bandwidth), fallback_(fallback) {
  if (!(bandwidth_ > 0.0)) throw ValidationError("nadaraya-watson: bandwidth must be positive");
  const auto k = static_cast<std::size_t>(data_.action_count());
  action_mean_.assign(k, 0.0);
  action_count_.assign(k, 0);
  double total = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const auto a = static_cast<std::size_t>(data_.actions()[i]);
    action_mean_[a] += data_.rewards()[i];
    ++action_count_[a];
    total += data_.rewards()[i];
  }
  global_mean_ = data_.size() ? total / static_cast<double>(data_.size()) : 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    action_mean_[a] = action_count_[a] ? action_mean_[a] / static_cast<double>(action_count_[a])
                                       : global_mean_;
  }
}

Matrix NadarayaWatsonModel::predict(const Matrix& x) const {
  const int k = action_count();
  const Matrix w = kernels::gaussian_gram(x, data_.covariates(), bandwidth_);
  Matrix num = Matrix::Zero(x.rows(), k);
  Matrix den = Matrix::Zero(x.rows(), k);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const int a = data_.actions()[i];
    const double y = data_.rewards()[i];
    const auto col = static_cast<Eigen::Index>(i);
    num.col(a) += w.col(col) * y;
    den.col(a) += w.col(col);
  }
  Matrix out(x.rows(), k);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (int a = 0; a < k; ++a) {
      if (den(r, a) >= 1e-12) {
        out(r, a) = num(r, a) / den(r, a);
      } else if (fallback_) {
        out(r, a) = action_mean_[static_cast<std::size_t>(a)];
      } else {
        std::ostringstream msg;
        msg << "nadaraya-watson: no kernel mass for action " << a;
        throw NumericalError(msg.str());
      }
    }
  }
  return out;
}

double NadarayaWatsonModel::predict(int action, CovariateView x) const {
  Matrix m(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t k = 0; k < x.size(); ++k) m(0, static_cast<Eigen::Index>(k)) = x[k];
  return predict(m)(0, action);
}

std::shared_ptr<const NadarayaWatsonModel> fit_outcome_nw(const HistoricalDataset& data,
                                                          const NadarayaWatsonOptions& options) {
  if (data.size() == 0) throw ValidationError("fit_outcome_nw: empty dataset");
  const double bw = resolve_bandwidth(options.bandwidth, data.covariates());
  if (!options.fallback) {
    std::vector<bool> seen(static_cast<std::size_t>(data.action_count()), false);
    for (int a : data.actions()) seen[static_cast<std::size_t>(a)] = true;
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw ValidationError("fit_outcome_nw: an action has no samples and fallback is disabled");
    }
  }
  return std::make_shared<NadarayaWatsonModel>(data, bw, options.fallback);
}

// ---------------------------------------------------------------------------

BehaviorNwModel::BehaviorNwModel(Matrix covariates, std::vector<int> actions, int action_count,
                                 double bandwidth, double floor)
    : x_(std::move(covariates)),
      actions_(std::move(actions)),
      action_count_(action_count),
      bandwidth_(bandwidth),
      floor_(floor),
      frequencies_(static_cast<std::size_t>(action_count), 0.0) {
  for (int a : actions_) frequencies_[static_cast<std::size_t>(a)] += 1.0;
  for (auto& f : frequencies_) f /= static_cast<double>(std::max<std::size_t>(actions_.size(), 1));
}

Matrix BehaviorNwModel::predict(const Matrix& x) const {
  const int k = action_count_;
  Matrix out = Matrix::Zero(x.rows(), k);
  if (k == 1) {
    out.setOnes();
    return out;
  }
  const Matrix w = kernels::gaussian_gram(x, x_, bandwidth_);
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    out.col(actions_[i]) += w.col(static_cast<Eigen::Index>(i));
  }
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double total = out.row(r).sum();
    if (total >= 1e-12) {
      out.row(r) /= total;
    } else {
      for (int a = 0; a < k; ++a) out(r, a) = frequencies_[static_cast<std::size_t>(a)];
    }
    clamp_renormalize({out.data() + r * k, static_cast<std::size_t>(k)}, floor_);
  }
  return out;
}

std::shared_ptr<const BehaviorNwModel> fit_behavior_nw(const HistoricalDataset& data,
                                                       double bandwidth, double floor) {
  if (data.size() == 0) throw ValidationError("fit_behavior_nw: empty dataset");
  const double bw = resolve_bandwidth(bandwidth, data.covariates());
  return std::make_shared<BehaviorNwModel>(data.covariates(), data.actions(), data.action_count(), bw,
                                           floor);
}

}  // namespace covshift
