#pragma once

// Fully enumerable tabular environments. States are encoded as 1-d
// covariates holding the state index, so every estimator in the library runs
// on them unchanged while exact answers stay computable by summation.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>

#include "covshift/core.hpp"
#include "json.hpp"

namespace covshift {

/// S states, |A| actions, historical marginal p, evaluation marginal q,
/// behavior table pi_b (S x |A|) and Bernoulli success table f (S x |A|).
class TabularDGP {
 public:
  TabularDGP(Vector p, Vector q, Matrix pi_b, Matrix f, double rho = 0.5);

  int states() const { return static_cast<int>(p_.size()); }
  int actions() const { return static_cast<int>(pi_b_.cols()); }
  const Vector& p() const { return p_; }
  const Vector& q() const { return q_; }
  const Matrix& pi_b() const { return pi_b_; }
  const Matrix& f() const { return f_; }
  double rho() const { return rho_; }

  /// q(x) / p(x); zero where q vanishes.
  double ratio(int state) const;
  Policy behavior_policy() const;

  /// Checks pi_e(a|x) > 0 implies pi_b(a|x) > 0 wherever q(x) > 0.
  void check_overlap(const Matrix& pi_e) const;

 private:
  Vector p_;
  Vector q_;
  Matrix pi_b_;
  Matrix f_;
  double rho_;
};

/// State index encoded in a covariate; throws when out of range.
int state_of(CovariateView x, int states);

/// Covariates for states 0..S-1 (S x 1).
Matrix state_covariates(int states);

/// Policy from an S x |A| row-stochastic table.
Policy tabular_policy(Matrix table);
/// Evaluates a policy on every state; S x |A|.
Matrix policy_table(const Policy& policy, int states);

struct SampledData {
  HistoricalDataset hist;
  EvaluationDataset evl;
};

/// n_hst = round(rho * n) historical triples and n - n_hst evaluation
/// covariates, drawn independently.
SampledData sample_datasets(const TabularDGP& dgp, std::size_t n, double rho, std::mt19937_64& rng);
SampledData sample_datasets(const TabularDGP& dgp, std::size_t n, double rho, std::uint64_t seed);
HistoricalDataset sample_historical(const TabularDGP& dgp, std::size_t n, std::mt19937_64& rng);

/// R(pi_e) = sum_x q(x) sum_a pi_e(a|x) f(a, x).
double exact_policy_value(const TabularDGP& dgp, const Policy& pi_e);

std::shared_ptr<const RatioModel> oracle_ratio(const TabularDGP& dgp);
std::shared_ptr<const ActionModel> oracle_behavior(const TabularDGP& dgp);
std::shared_ptr<const ActionModel> oracle_outcome(const TabularDGP& dgp);
NuisanceSet oracle_nuisances(const TabularDGP& dgp, const NuisanceBounds& bounds = {});

enum class Corruption { Scale, Shift, Constant };

/// Wrapper that records how an oracle nuisance was deliberately broken.
class CorruptedRatio final : public RatioModel {
 public:
  CorruptedRatio(std::shared_ptr<const RatioModel> base, Corruption mode, double amount);
  Vector predict(const Matrix& x) const override;
  const std::string& description() const { return description_; }

 private:
  std::shared_ptr<const RatioModel> base_;
  Corruption mode_;
  double amount_;
  std::string description_;
};

class CorruptedActionModel final : public ActionModel {
 public:
  CorruptedActionModel(std::shared_ptr<const ActionModel> base, Corruption mode, double amount,
                       double upper);
  int action_count() const override { return base_->action_count(); }
  Matrix predict(const Matrix& x) const override;
  const std::string& description() const { return description_; }

 private:
  std::shared_ptr<const ActionModel> base_;
  Corruption mode_;
  double amount_;
  double upper_;
  std::string description_;
};

/// scale: amount * r; shift: r + amount; constant: amount. Results are kept
/// non-negative.
std::shared_ptr<const CorruptedRatio> misspecify(std::shared_ptr<const RatioModel> ratio,
                                                 Corruption mode, double amount = 1.0);
/// Same modes for an outcome model, clipped to [0, upper].
std::shared_ptr<const CorruptedActionModel> misspecify(std::shared_ptr<const ActionModel> outcome,
                                                       Corruption mode, double amount,
                                                       double upper = 1.0);

/// A DGP together with an optional evaluation-policy table.
struct TabularProblem {
  TabularDGP dgp;
  std::optional<Matrix> pi_e;
};

/// Parses {"p", "q", "pi_b", "f", "rho"} plus an optional "pi_e" table.
TabularProblem tabular_problem_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TabularDGP& dgp);

/// The reference 4-state, 3-action problem used by the oracle checks
/// (max q/p = 3, rho = 0.5). Mirrors tests/fixtures/tabular_dgp.json.
TabularProblem reference_problem();

}  // namespace covshift
