#include "covshift/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace covshift {

Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(idx[r]));
  }
  return out;
}

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw ValidationError(std::string(what) + ": covariates must be finite");
  }
}

}  // namespace

HistoricalDataset::HistoricalDataset(Matrix covariates, std::vector<int> actions,
                                     std::vector<double> rewards, int action_count, double r_max)
    : x_(std::move(covariates)),
      actions_(std::move(actions)),
      rewards_(std::move(rewards)),
      action_count_(action_count),
      r_max_(r_max) {
  if (action_count_ < 1) throw ValidationError("historical dataset: action count must be >= 1");
  if (!(r_max_ > 0.0)) throw ValidationError("historical dataset: r_max must be positive");
  if (static_cast<std::size_t>(x_.rows()) != actions_.size() || actions_.size() != rewards_.size()) {
    throw ValidationError("historical dataset: covariate/action/reward lengths differ");
  }
  require_finite(x_, "historical dataset");
  for (std::size_t i = 0; i < actions_.size(); ++i) {
    if (actions_[i] < 0 || actions_[i] >= action_count_) {
      std::ostringstream msg;
      msg << "historical dataset: action " << actions_[i] << " at row " << i << " outside [0, "
          << action_count_ << ")";
      throw ValidationError(msg.str());
    }
    if (!(rewards_[i] >= 0.0 && rewards_[i] <= r_max_)) {
      std::ostringstream msg;
      msg << "historical dataset: reward " << rewards_[i] << " at row " << i << " outside [0, "
          << r_max_ << "]";
      throw ValidationError(msg.str());
    }
  }
}

HistoricalDataset HistoricalDataset::subset(std::span<const std::size_t> idx) const {
  std::vector<int> a;
  std::vector<double> y;
  a.reserve(idx.size());
  y.reserve(idx.size());
  for (auto i : idx) {
    a.push_back(actions_[i]);
    y.push_back(rewards_[i]);
  }
  return HistoricalDataset(select_rows(x_, idx), std::move(a), std::move(y), action_count_, r_max_);
}

EvaluationDataset::EvaluationDataset(Matrix covariates) : z_(std::move(covariates)) {
  require_finite(z_, "evaluation dataset");
}

EvaluationDataset EvaluationDataset::subset(std::span<const std::size_t> idx) const {
  return EvaluationDataset(select_rows(z_, idx));
}

double historical_share(const HistoricalDataset& hist, const EvaluationDataset& evl) {
  const double nh = static_cast<double>(hist.size());
  const double ne = static_cast<double>(evl.size());
  if (nh + ne == 0.0) throw ValidationError("historical_share: both datasets empty");
  return nh / (nh + ne);
}

// ---------------------------------------------------------------------------

Policy::Policy(std::shared_ptr<const PolicyModel> model) : model_(std::move(model)) {
  if (!model_) throw ValidationError("policy: null model");
  if (model_->action_count() < 1) throw ValidationError("policy: action count must be >= 1");
}

void Policy::check_dim(CovariateView x) const {
  const auto d = model_->dim();
  if (d >= 0 && static_cast<Eigen::Index>(x.size()) != d) {
    std::ostringstream msg;
    msg << "policy: covariate dimension " << x.size() << " does not match " << d;
    throw ValidationError(msg.str());
  }
}

std::vector<double> Policy::prob_vector(CovariateView x) const {
  check_dim(x);
  std::vector<double> out(static_cast<std::size_t>(action_count()));
  model_->probabilities(x, out);
  return out;
}

double Policy::prob(int action, CovariateView x) const {
  if (action < 0 || action >= action_count()) throw ValidationError("policy: action out of range");
  return prob_vector(x)[static_cast<std::size_t>(action)];
}

Matrix Policy::prob_matrix(const Matrix& x) const {
  if (x.rows() > 0) check_dim(row_view(x, 0));
  Matrix out(x.rows(), action_count());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    model_->probabilities(row_view(x, i),
                          {out.data() + i * out.cols(), static_cast<std::size_t>(out.cols())});
  }
  return out;
}

namespace {

class UniformModel final : public PolicyModel {
 public:
  explicit UniformModel(int k) : k_(k) {}
  int action_count() const override { return k_; }
  void probabilities(CovariateView, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 1.0 / k_);
  }

 private:
  int k_;
};

class PointMassModel final : public PolicyModel {
 public:
  PointMassModel(int k, int a) : k_(k), a_(a) {}
  int action_count() const override { return k_; }
  void probabilities(CovariateView, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    out[static_cast<std::size_t>(a_)] = 1.0;
  }

 private:
  int k_;
  int a_;
};

class MixtureModel final : public PolicyModel {
 public:
  MixtureModel(Policy base, double w) : base_(std::move(base)), w_(w) {}
  int action_count() const override { return base_.action_count(); }
  Eigen::Index dim() const override { return base_.dim(); }
  void probabilities(CovariateView x, std::span<double> out) const override {
    base_.model().probabilities(x, out);
    const double u = w_ / static_cast<double>(out.size());
    for (auto& p : out) p = (1.0 - w_) * p + u;
  }

 private:
  Policy base_;
  double w_;
};

class FunctionModel final : public PolicyModel {
 public:
  FunctionModel(int k, std::function<void(CovariateView, std::span<double>)> fn, Eigen::Index d)
      : k_(k), fn_(std::move(fn)), d_(d) {}
  int action_count() const override { return k_; }
  Eigen::Index dim() const override { return d_; }
  void probabilities(CovariateView x, std::span<double> out) const override {
    fn_(x, out);
    double total = 0.0;
    for (double p : out) {
      if (!(p >= 0.0)) throw ValidationError("function_policy: negative or NaN probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ValidationError("function_policy: probabilities do not sum to 1");
    }
  }

 private:
  int k_;
  std::function<void(CovariateView, std::span<double>)> fn_;
  Eigen::Index d_;
};

}  // namespace

Policy uniform_policy(int action_count) {
  if (action_count < 1) throw ValidationError("uniform_policy: action count must be >= 1");
  return Policy(std::make_shared<UniformModel>(action_count));
}

Policy deterministic_policy(int action_count, int action) {
  if (action < 0 || action >= action_count) {
    throw ValidationError("deterministic_policy: action out of range");
  }
  return Policy(std::make_shared<PointMassModel>(action_count, action));
}

Policy mixture_policy(const Policy& base, double uniform_weight) {
  if (!(uniform_weight >= 0.0 && uniform_weight <= 1.0)) {
    throw ValidationError("mixture_policy: uniform weight must lie in [0, 1]");
  }
  return Policy(std::make_shared<MixtureModel>(base, uniform_weight));
}

Policy function_policy(int action_count, std::function<void(CovariateView, std::span<double>)> fn,
                       Eigen::Index dim) {
  return Policy(std::make_shared<FunctionModel>(action_count, std::move(fn), dim));
}

double policy_value_at(std::span<const double> policy_probs, std::span<const double> outcome_row) {
  if (policy_probs.size() != outcome_row.size()) {
    throw ValidationError("policy_value_at: action counts differ");
  }
  double v = 0.0;
  for (std::size_t a = 0; a < policy_probs.size(); ++a) v += policy_probs[a] * outcome_row[a];
  return v;
}

// ---------------------------------------------------------------------------

namespace {

class ConstantRatio final : public RatioModel {
 public:
  explicit ConstantRatio(double v) : v_(v) {}
  Vector predict(const Matrix& x) const override { return Vector::Constant(x.rows(), v_); }

 private:
  double v_;
};

class FunctionRatio final : public RatioModel {
 public:
  explicit FunctionRatio(std::function<double(CovariateView)> fn) : fn_(std::move(fn)) {}
  Vector predict(const Matrix& x) const override {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = fn_(row_view(x, i));
    return out;
  }

 private:
  std::function<double(CovariateView)> fn_;
};

class FunctionActionModel final : public ActionModel {
 public:
  FunctionActionModel(int k, std::function<double(int, CovariateView)> fn)
      : k_(k), fn_(std::move(fn)) {}
  int action_count() const override { return k_; }
  Matrix predict(const Matrix& x) const override {
    Matrix out(x.rows(), k_);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (int a = 0; a < k_; ++a) out(i, a) = fn_(a, row_view(x, i));
    }
    return out;
  }

 private:
  int k_;
  std::function<double(int, CovariateView)> fn_;
};

class PolicyActionModel final : public ActionModel {
 public:
  explicit PolicyActionModel(Policy p) : p_(std::move(p)) {}
  int action_count() const override { return p_.action_count(); }
  Matrix predict(const Matrix& x) const override { return p_.prob_matrix(x); }

 private:
  Policy p_;
};

}  // namespace

std::shared_ptr<const RatioModel> constant_ratio(double value) {
  return std::make_shared<ConstantRatio>(value);
}

std::shared_ptr<const RatioModel> function_ratio(std::function<double(CovariateView)> fn) {
  return std::make_shared<FunctionRatio>(std::move(fn));
}

std::shared_ptr<const ActionModel> function_action_model(
    int action_count, std::function<double(int, CovariateView)> fn) {
  return std::make_shared<FunctionActionModel>(action_count, std::move(fn));
}

std::shared_ptr<const ActionModel> policy_action_model(const Policy& policy) {
  return std::make_shared<PolicyActionModel>(policy);
}

double clip(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

NuisanceSet::NuisanceSet(std::shared_ptr<const RatioModel> ratio,
                         std::shared_ptr<const ActionModel> behavior,
                         std::shared_ptr<const ActionModel> outcome, NuisanceBounds bounds)
    : ratio_(std::move(ratio)),
      behavior_(std::move(behavior)),
      outcome_(std::move(outcome)),
      bounds_(bounds) {
  if (!ratio_ || !behavior_ || !outcome_) throw ValidationError("nuisance set: null model");
  if (behavior_->action_count() != outcome_->action_count()) {
    throw ValidationError("nuisance set: behavior and outcome action counts differ");
  }
  if (!(bounds_.ratio_max >= 0.0 && bounds_.weight_max >= 0.0 && bounds_.reward_max > 0.0)) {
    throw ValidationError("nuisance set: bounds must be non-negative (R_max positive)");
  }
}

NuisanceSet NuisanceSet::with_provenance(FitProvenance p) const {
  NuisanceSet copy = *this;
  copy.provenance_ = std::move(p);
  return copy;
}

Vector NuisanceSet::ratio(const Matrix& x, ClipCounts* clips) const {
  Vector r = ratio_->predict(x);
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double c = clip(r[i], 0.0, bounds_.ratio_max);
    if (clips && c != r[i]) ++clips->ratio;
    r[i] = c;
  }
  return r;
}

Matrix NuisanceSet::behavior(const Matrix& x) const { return behavior_->predict(x); }

Matrix NuisanceSet::outcome(const Matrix& x, ClipCounts* clips) const {
  Matrix f = outcome_->predict(x);
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double c = clip(f.data()[i], 0.0, bounds_.reward_max);
    if (clips && c != f.data()[i]) ++clips->outcome;
    f.data()[i] = c;
  }
  return f;
}

Vector NuisanceSet::weight(const Matrix& x, std::span<const int> actions,
                           std::span<const double> target_probs, ClipCounts* clips) const {
  if (actions.size() != static_cast<std::size_t>(x.rows()) || target_probs.size() != actions.size()) {
    throw ValidationError("nuisance weight: length mismatch");
  }
  const Matrix pb = behavior_->predict(x);
  Vector w(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double denom = pb(i, actions[static_cast<std::size_t>(i)]);
    const double raw = denom > 0.0 ? target_probs[static_cast<std::size_t>(i)] / denom
                                   : (target_probs[static_cast<std::size_t>(i)] > 0.0
                                          ? bounds_.weight_max
                                          : 0.0);
    const double c = clip(raw, 0.0, bounds_.weight_max);
    if (clips && c != raw) ++clips->weight;
    w[i] = c;
  }
  return w;
}

// ---------------------------------------------------------------------------

FoldPartition::FoldPartition(std::size_t n, int folds, std::uint64_t seed) : folds_(folds) {
  if (folds < 1) throw ValidationError("fold partition: fold count must be >= 1");
  if (static_cast<std::size_t>(folds) > n) {
    throw ValidationError("fold partition: more folds than observations");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  fold_of_.assign(n, 0);
  for (std::size_t pos = 0; pos < n; ++pos) {
    fold_of_[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(folds));
  }
}

FoldPartition::FoldPartition(std::vector<int> fold_of, int folds)
    : fold_of_(std::move(fold_of)), folds_(folds) {
  if (folds < 1) throw ValidationError("fold partition: fold count must be >= 1");
  std::vector<std::size_t> counts(static_cast<std::size_t>(folds), 0);
  for (int f : fold_of_) {
    if (f < 0 || f >= folds) throw ValidationError("fold partition: fold index out of range");
    ++counts[static_cast<std::size_t>(f)];
  }
  for (auto c : counts) {
    if (c == 0) throw ValidationError("fold partition: empty fold");
  }
}

std::vector<std::size_t> FoldPartition::in_fold(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of_.size(); ++i) {
    if (fold_of_[i] == k) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPartition::out_of_fold(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of_.size(); ++i) {
    if (fold_of_[i] != k) out.push_back(i);
  }
  return out;
}

}  // namespace covshift
