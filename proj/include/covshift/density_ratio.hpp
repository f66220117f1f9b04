#pragma once

// Density-ratio estimation r(x) = q(x) / p(x), where p is the historical
// covariate density and q the evaluation one.
//
// Two routes are provided:
//   * KuLSIF: squared-loss fitting of the ratio in a Gaussian RKHS. The
//     minimizer of
//         1/2 E_hist[s(X)^2] - E_evl[s(Z)] + lambda/2 ||s||^2
//     has the representer form
//         s(x) = sum_i alpha_i k(x, X_i) + sum_j beta_j k(x, Z_j),
//     with beta_j = 1 / (lambda n_evl) and alpha solving
//         (K_hh / n_hist + lambda I) s_h = K_he 1 / n_evl,
//         alpha = -s_h / (lambda n_hist),
//     where s_h are the fitted values at the historical points.
//   * A plug-in ratio of two kernel density estimates.

#include <cstdint>
#include <memory>

#include "covshift/core.hpp"

namespace covshift {

struct KulsifOptions {
  /// Kernel width; <= 0 selects the median pairwise distance of the pooled sample.
  double bandwidth = 0.0;
  /// Ridge weight; <= 0 selects min(n_hist, n_evl)^(-0.9).
  double ridge = 0.0;
  /// Predictions are clipped to [0, ratio_max].
  double ratio_max = 10.0;
};

class KulsifModel final : public RatioModel {
 public:
  KulsifModel(Matrix centers, Vector coefficients, std::size_t n_hist, double bandwidth,
              double ridge, double ratio_max);

  /// Clipped prediction in [0, ratio_max].
  Vector predict(const Matrix& x) const override;
  Vector predict_raw(const Matrix& x) const;

  /// Regularized empirical objective at arbitrary dual coefficients over the
  /// stored centers (historical rows first, then evaluation rows).
  double objective(const Vector& coefficients) const;
  double objective() const { return objective(coefficients_); }

  const Matrix& centers() const { return centers_; }
  const Vector& coefficients() const { return coefficients_; }
  std::size_t hist_count() const { return n_hist_; }
  std::size_t evl_count() const { return static_cast<std::size_t>(centers_.rows()) - n_hist_; }
  double bandwidth() const { return bandwidth_; }
  double ridge() const { return ridge_; }
  double ratio_max() const { return ratio_max_; }

 private:
  Matrix centers_;
  Vector coefficients_;
  std::size_t n_hist_;
  double bandwidth_;
  double ridge_;
  double ratio_max_;
};

KulsifModel fit_kulsif(const Matrix& hist_x, const Matrix& evl_x, const KulsifOptions& options = {});

enum class KernelFamily { Gaussian };

/// Kernel density estimate in the scaled form
///   f(x) = (1/n) sum_i h^{-d} K((x_i - x) / h^d)
/// with the standard Gaussian K. For d = 1 this is the textbook estimator.
class KdeModel {
 public:
  KdeModel(Matrix samples, double bandwidth, KernelFamily family = KernelFamily::Gaussian);

  double eval(CovariateView x) const;
  Vector eval(const Matrix& x) const;

  const Matrix& samples() const { return samples_; }
  double bandwidth() const { return bandwidth_; }
  KernelFamily family() const { return family_; }

 private:
  Matrix samples_;
  double bandwidth_;
  KernelFamily family_;
};

/// Scott's rule n^(-1/(d+4)) times the mean per-dimension standard deviation.
double scott_bandwidth(const Matrix& samples);

/// `bandwidth` <= 0 selects Scott's rule.
KdeModel fit_kde(const Matrix& samples, double bandwidth = 0.0);

/// q-hat(x) / max(p-hat(x), floor), clipped to [0, ratio_max].
double kde_ratio_predict(const KdeModel& q_model, const KdeModel& p_model, CovariateView x,
                         double floor = 1e-6, double ratio_max = 10.0);

/// RatioModel adaptor around two KDEs.
class KdeRatioModel final : public RatioModel {
 public:
  KdeRatioModel(KdeModel q_model, KdeModel p_model, double floor = 1e-6, double ratio_max = 10.0);
  Vector predict(const Matrix& x) const override;

 private:
  KdeModel q_;
  KdeModel p_;
  double floor_;
  double ratio_max_;
};

struct KdeRatioOptions {
  /// <= 0 selects Scott's rule per sample.
  double hist_bandwidth = 0.0;
  double evl_bandwidth = 0.0;
  double floor = 1e-6;
  double ratio_max = 10.0;
};

std::shared_ptr<const KdeRatioModel> fit_kde_ratio(const Matrix& hist_x, const Matrix& evl_x,
                                                   const KdeRatioOptions& options = {});

}  // namespace covshift
