#include "covshift/synthetic.hpp"

#include <cmath>
#include <sstream>

namespace covshift {

namespace {

void check_distribution(const Eigen::Ref<const Vector>& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0) || !std::isfinite(v[i])) {
      throw ValidationError(std::string("tabular dgp: ") + what + " has a negative entry");
    }
  }
  if (std::abs(v.sum() - 1.0) > 1e-9) {
    throw ValidationError(std::string("tabular dgp: ") + what + " does not sum to 1");
  }
}

}  // namespace

TabularDGP::TabularDGP(Vector p, Vector q, Matrix pi_b, Matrix f, double rho)
    : p_(std::move(p)), q_(std::move(q)), pi_b_(std::move(pi_b)), f_(std::move(f)), rho_(rho) {
  const auto s = p_.size();
  if (s < 1) throw ValidationError("tabular dgp: need at least one state");
  if (q_.size() != s || pi_b_.rows() != s || f_.rows() != s || f_.cols() != pi_b_.cols() ||
      pi_b_.cols() < 1) {
    throw ValidationError("tabular dgp: table shapes disagree");
  }
  if (!(rho_ > 0.0 && rho_ < 1.0)) throw ValidationError("tabular dgp: rho must lie in (0, 1)");
  check_distribution(p_, "p");
  check_distribution(q_, "q");
  for (Eigen::Index x = 0; x < s; ++x) {
    check_distribution(pi_b_.row(x).transpose(), "pi_b row");
    if (q_[x] > 0.0 && !(p_[x] > 0.0)) {
      throw ValidationError("tabular dgp: q(x) > 0 requires p(x) > 0");
    }
    for (Eigen::Index a = 0; a < f_.cols(); ++a) {
      if (!(f_(x, a) >= 0.0 && f_(x, a) <= 1.0)) {
        throw ValidationError("tabular dgp: success probabilities must lie in [0, 1]");
      }
    }
  }
}

double TabularDGP::ratio(int state) const {
  if (state < 0 || state >= states()) throw ValidationError("tabular dgp: state out of range");
  return q_[state] > 0.0 ? q_[state] / p_[state] : 0.0;
}

Policy TabularDGP::behavior_policy() const { return tabular_policy(pi_b_); }

void TabularDGP::check_overlap(const Matrix& pi_e) const {
  if (pi_e.rows() != states() || pi_e.cols() != actions()) {
    throw ValidationError("tabular dgp: evaluation table has the wrong shape");
  }
  for (int x = 0; x < states(); ++x) {
    if (!(q_[x] > 0.0)) continue;
    for (int a = 0; a < actions(); ++a) {
      if (pi_e(x, a) > 0.0 && !(pi_b_(x, a) > 0.0)) {
        std::ostringstream msg;
        msg << "tabular dgp: pi_e(" << a << "|" << x << ") > 0 but pi_b is zero";
        throw ValidationError(msg.str());
      }
    }
  }
}

int state_of(CovariateView x, int states) {
  if (x.size() != 1) throw ValidationError("tabular: covariates must be 1-d state indices");
  const double r = std::round(x[0]);
  if (!(r >= 0.0 && r < static_cast<double>(states))) {
    throw ValidationError("tabular: state index out of range");
  }
  return static_cast<int>(r);
}

Matrix state_covariates(int states) {
  Matrix m(states, 1);
  for (int s = 0; s < states; ++s) m(s, 0) = s;
  return m;
}

Policy tabular_policy(Matrix table) {
  for (Eigen::Index x = 0; x < table.rows(); ++x) {
    check_distribution(table.row(x).transpose(), "policy row");
  }
  const int states = static_cast<int>(table.rows());
  const int k = static_cast<int>(table.cols());
  return function_policy(
      k,
      [table = std::move(table), states](CovariateView x, std::span<double> out) {
        const int s = state_of(x, states);
        for (std::size_t a = 0; a < out.size(); ++a) out[a] = table(s, static_cast<Eigen::Index>(a));
      },
      1);
}

Matrix policy_table(const Policy& policy, int states) {
  return policy.prob_matrix(state_covariates(states));
}

HistoricalDataset sample_historical(const TabularDGP& dgp, std::size_t n, std::mt19937_64& rng) {
  std::discrete_distribution<int> state_dist(dgp.p().data(), dgp.p().data() + dgp.p().size());
  std::vector<std::discrete_distribution<int>> action_dist;
  action_dist.reserve(static_cast<std::size_t>(dgp.states()));
  for (int s = 0; s < dgp.states(); ++s) {
    std::vector<double> row(dgp.pi_b().row(s).data(), dgp.pi_b().row(s).data() + dgp.actions());
    action_dist.emplace_back(row.begin(), row.end());
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix x(static_cast<Eigen::Index>(n), 1);
  std::vector<int> a(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int s = state_dist(rng);
    const int act = action_dist[static_cast<std::size_t>(s)](rng);
    x(static_cast<Eigen::Index>(i), 0) = s;
    a[i] = act;
    y[i] = unif(rng) < dgp.f()(s, act) ? 1.0 : 0.0;
  }
  return HistoricalDataset(std::move(x), std::move(a), std::move(y), dgp.actions(), 1.0);
}

SampledData sample_datasets(const TabularDGP& dgp, std::size_t n, double rho, std::mt19937_64& rng) {
  if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("sample_datasets: rho must lie in (0, 1)");
  const auto n_hst = static_cast<std::size_t>(std::llround(rho * static_cast<double>(n)));
  if (n_hst < 1 || n_hst >= n) {
    throw ValidationError("sample_datasets: both samples need at least one row");
  }
  const std::size_t n_evl = n - n_hst;
  HistoricalDataset hist = sample_historical(dgp, n_hst, rng);
  std::discrete_distribution<int> q_dist(dgp.q().data(), dgp.q().data() + dgp.q().size());
  Matrix z(static_cast<Eigen::Index>(n_evl), 1);
  for (std::size_t j = 0; j < n_evl; ++j) z(static_cast<Eigen::Index>(j), 0) = q_dist(rng);
  return {std::move(hist), EvaluationDataset(std::move(z))};
}

SampledData sample_datasets(const TabularDGP& dgp, std::size_t n, double rho, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_datasets(dgp, n, rho, rng);
}

double exact_policy_value(const TabularDGP& dgp, const Policy& pi_e) {
  const Matrix pe = policy_table(pi_e, dgp.states());
  double value = 0.0;
  for (int x = 0; x < dgp.states(); ++x) {
    double v = 0.0;
    for (int a = 0; a < dgp.actions(); ++a) v += pe(x, a) * dgp.f()(x, a);
    value += dgp.q()[x] * v;
  }
  return value;
}

std::shared_ptr<const RatioModel> oracle_ratio(const TabularDGP& dgp) {
  return function_ratio([dgp](CovariateView x) { return dgp.ratio(state_of(x, dgp.states())); });
}

std::shared_ptr<const ActionModel> oracle_behavior(const TabularDGP& dgp) {
  return policy_action_model(dgp.behavior_policy());
}

std::shared_ptr<const ActionModel> oracle_outcome(const TabularDGP& dgp) {
  return function_action_model(dgp.actions(), [dgp](int a, CovariateView x) {
    return dgp.f()(state_of(x, dgp.states()), a);
  });
}

NuisanceSet oracle_nuisances(const TabularDGP& dgp, const NuisanceBounds& bounds) {
  return NuisanceSet(oracle_ratio(dgp), oracle_behavior(dgp), oracle_outcome(dgp), bounds);
}

// ---------------------------------------------------------------------------

namespace {

std::string describe(const char* what, Corruption mode, double amount) {
  std::ostringstream out;
  out << what << ": ";
  switch (mode) {
    case Corruption::Scale:
      out << "scaled by " << amount;
      break;
    case Corruption::Shift:
      out << "shifted by " << amount;
      break;
    case Corruption::Constant:
      out << "replaced by constant " << amount;
      break;
  }
  return out.str();
}

double corrupt(double v, Corruption mode, double amount) {
  switch (mode) {
    case Corruption::Scale:
      return v * amount;
    case Corruption::Shift:
      return v + amount;
    case Corruption::Constant:
      return amount;
  }
  return v;
}

}  // namespace

CorruptedRatio::CorruptedRatio(std::shared_ptr<const RatioModel> base, Corruption mode, double amount)
    : base_(std::move(base)), mode_(mode), amount_(amount), description_(describe("ratio", mode, amount)) {
  if (!base_) throw ValidationError("misspecify: null ratio model");
}

Vector CorruptedRatio::predict(const Matrix& x) const {
  Vector r = base_->predict(x);
  for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = std::max(0.0, corrupt(r[i], mode_, amount_));
  return r;
}

CorruptedActionModel::CorruptedActionModel(std::shared_ptr<const ActionModel> base, Corruption mode,
                                           double amount, double upper)
    : base_(std::move(base)),
      mode_(mode),
      amount_(amount),
      upper_(upper),
      description_(describe("outcome", mode, amount)) {
  if (!base_) throw ValidationError("misspecify: null outcome model");
}

Matrix CorruptedActionModel::predict(const Matrix& x) const {
  Matrix f = base_->predict(x);
  return f.unaryExpr([this](double v) { return clip(corrupt(v, mode_, amount_), 0.0, upper_); });
}

std::shared_ptr<const CorruptedRatio> misspecify(std::shared_ptr<const RatioModel> ratio,
                                                 Corruption mode, double amount) {
  return std::make_shared<CorruptedRatio>(std::move(ratio), mode, amount);
}

std::shared_ptr<const CorruptedActionModel> misspecify(std::shared_ptr<const ActionModel> outcome,
                                                       Corruption mode, double amount, double upper) {
  return std::make_shared<CorruptedActionModel>(std::move(outcome), mode, amount, upper);
}

// ---------------------------------------------------------------------------

namespace {

Vector vector_from_json(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw ValidationError(std::string("tabular json: missing array '") + key + "'");
  }
  const auto values = j.at(key).get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Matrix matrix_from_json(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw ValidationError(std::string("tabular json: missing table '") + key + "'");
  }
  const auto rows = j.at(key).get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw ValidationError(std::string("tabular json: empty table '") + key + "'");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) {
      throw ValidationError(std::string("tabular json: ragged table '") + key + "'");
    }
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  auto out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.row(r).data(), m.row(r).data() + m.cols());
    out.push_back(row);
  }
  return out;
}

}  // namespace

TabularProblem tabular_problem_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("tabular json: expected an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "p" && key != "q" && key != "pi_b" && key != "f" && key != "rho" && key != "pi_e") {
      throw ValidationError("tabular json: unknown key '" + key + "'");
    }
  }
  if (!j.contains("rho") || !j.at("rho").is_number()) {
    throw ValidationError("tabular json: missing number 'rho'");
  }
  TabularDGP dgp(vector_from_json(j, "p"), vector_from_json(j, "q"), matrix_from_json(j, "pi_b"),
                 matrix_from_json(j, "f"), j.at("rho").get<double>());
  std::optional<Matrix> pi_e;
  if (j.contains("pi_e")) {
    pi_e = matrix_from_json(j, "pi_e");
    dgp.check_overlap(*pi_e);
    tabular_policy(*pi_e);  // validates rows
  }
  return {std::move(dgp), std::move(pi_e)};
}

nlohmann::json to_json(const TabularDGP& dgp) {
  nlohmann::json j;
  j["p"] = std::vector<double>(dgp.p().data(), dgp.p().data() + dgp.p().size());
  j["q"] = std::vector<double>(dgp.q().data(), dgp.q().data() + dgp.q().size());
  j["pi_b"] = matrix_to_json(dgp.pi_b());
  j["f"] = matrix_to_json(dgp.f());
  j["rho"] = dgp.rho();
  return j;
}

TabularProblem reference_problem() {
  Vector p(4), q(4);
  p << 0.4, 0.3, 0.2, 0.1;
  q << 0.1, 0.2, 0.4, 0.3;
  Matrix pi_b(4, 3), f(4, 3), pi_e(4, 3);
  pi_b << 0.6, 0.3, 0.1,
          0.2, 0.5, 0.3,
          0.3, 0.3, 0.4,
          0.5, 0.25, 0.25;
  f << 0.2, 0.3, 0.4,
       0.5, 0.4, 0.3,
       0.8, 0.3, 0.6,
       0.4, 0.9, 0.5;
  pi_e << 0.1, 0.2, 0.7,
          0.7, 0.2, 0.1,
          0.6, 0.1, 0.3,
          0.2, 0.6, 0.2;
  return {TabularDGP(p, q, pi_b, f, 0.5), pi_e};
}

}  // namespace covshift
