#include "covshift/density_ratio.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "covshift/kernels.hpp"

namespace covshift {

KulsifModel::KulsifModel(Matrix centers, Vector coefficients, std::size_t n_hist, double bandwidth,
                         double ridge, double ratio_max)
    : centers_(std::move(centers)),
      coefficients_(std::move(coefficients)),
      n_hist_(n_hist),
      bandwidth_(bandwidth),
      ridge_(ridge),
      ratio_max_(ratio_max) {
  if (coefficients_.size() != centers_.rows()) {
    throw ValidationError("kulsif: coefficient count does not match centers");
  }
  if (!(ridge_ > 0.0)) throw ValidationError("kulsif: ridge weight must be positive");
}

Vector KulsifModel::predict_raw(const Matrix& x) const {
  if (x.cols() != centers_.cols()) throw ValidationError("kulsif: covariate dimension mismatch");
  return kernels::gaussian_gram(x, centers_, bandwidth_) * coefficients_;
}

Vector KulsifModel::predict(const Matrix& x) const {
  Vector r = predict_raw(x);
  for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = clip(r[i], 0.0, ratio_max_);
  return r;
}

double KulsifModel::objective(const Vector& c) const {
  if (c.size() != centers_.rows()) throw ValidationError("kulsif objective: wrong coefficient count");
  const auto nh = static_cast<Eigen::Index>(n_hist_);
  const Eigen::Index ne = centers_.rows() - nh;
  const Matrix k = kernels::gaussian_gram(centers_, centers_, bandwidth_);
  const Vector s = k * c;  // fitted values at every center
  const double quad = s.head(nh).squaredNorm() / (2.0 * static_cast<double>(nh));
  const double lin = s.tail(ne).sum() / static_cast<double>(ne);
  const double reg = 0.5 * ridge_ * c.dot(s);
  return quad - lin + reg;
}

KulsifModel fit_kulsif(const Matrix& hist_x, const Matrix& evl_x, const KulsifOptions& options) {
  if (hist_x.rows() == 0 || evl_x.rows() == 0) {
    throw ValidationError("fit_kulsif: both samples must be non-empty");
  }
  if (hist_x.cols() != evl_x.cols()) throw ValidationError("fit_kulsif: dimension mismatch");
  const Eigen::Index nh = hist_x.rows();
  const Eigen::Index ne = evl_x.rows();
  const double bw = options.bandwidth > 0.0 ? options.bandwidth
                                            : kernels::median_pairwise_distance(hist_x, evl_x);
  const double lambda =
      options.ridge > 0.0 ? options.ridge
                          : std::pow(static_cast<double>(std::min(nh, ne)), -0.9);
  if (!std::isfinite(bw) || !std::isfinite(lambda)) {
    throw ValidationError("fit_kulsif: bandwidth and ridge must be finite");
  }

  Matrix system = kernels::gaussian_gram(hist_x, hist_x, bw) / static_cast<double>(nh);
  system.diagonal().array() += lambda;
  const Vector rhs =
      kernels::gaussian_row_sums(hist_x, evl_x, bw) / static_cast<double>(ne);

  Eigen::LLT<Matrix> llt(system);
  const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  if (llt.info() != Eigen::Success || !(rcond > 1e-14)) {
    std::ostringstream msg;
    msg << "fit_kulsif: ill-conditioned system (reciprocal condition estimate " << rcond
        << ", bandwidth " << bw << ", ridge " << lambda << ")";
    throw NumericalError(msg.str());
  }
  const Vector fitted_hist = llt.solve(rhs);

  Matrix centers(nh + ne, hist_x.cols());
  centers << hist_x, evl_x;
  Vector coef(nh + ne);
  coef.head(nh) = -fitted_hist / (lambda * static_cast<double>(nh));
  coef.tail(ne).setConstant(1.0 / (lambda * static_cast<double>(ne)));
  return KulsifModel(std::move(centers), std::move(coef), static_cast<std::size_t>(nh), bw, lambda,
                     options.ratio_max);
}

// ---------------------------------------------------------------------------

KdeModel::KdeModel(Matrix samples, double bandwidth, KernelFamily family)
    : samples_(std::move(samples)), bandwidth_(bandwidth), family_(family) {
  if (samples_.rows() == 0) throw ValidationError("kde: samples must be non-empty");
  if (!(bandwidth_ > 0.0) || !std::isfinite(bandwidth_)) {
    throw ValidationError("kde: bandwidth must be positive");
  }
}

Vector KdeModel::eval(const Matrix& x) const {
  if (x.cols() != samples_.cols()) throw ValidationError("kde: covariate dimension mismatch");
  const double d = static_cast<double>(samples_.cols());
  // K((x_i - x) / s) with s = h^d is a Gaussian kernel of width s.
  const double scale = std::pow(bandwidth_, d);
  const double norm = std::pow(bandwidth_, -d) * std::pow(2.0 * std::numbers::pi, -d / 2.0) /
                      static_cast<double>(samples_.rows());
  return kernels::gaussian_row_sums(x, samples_, scale) * norm;
}

double KdeModel::eval(CovariateView x) const {
  Matrix m(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t k = 0; k < x.size(); ++k) m(0, static_cast<Eigen::Index>(k)) = x[k];
  return eval(m)[0];
}

double scott_bandwidth(const Matrix& samples) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  if (n < 2) return 1.0;
  double sd_sum = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    const double mean = samples.col(k).mean();
    const double var = (samples.col(k).array() - mean).square().sum() / static_cast<double>(n - 1);
    sd_sum += std::sqrt(var);
  }
  double sd = sd_sum / static_cast<double>(d);
  if (!(sd > 0.0)) sd = 1.0;
  return std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(d) + 4.0)) * sd;
}

KdeModel fit_kde(const Matrix& samples, double bandwidth) {
  if (samples.rows() == 0) throw ValidationError("fit_kde: samples must be non-empty");
  if (bandwidth < 0.0 || std::isnan(bandwidth)) throw ValidationError("fit_kde: bandwidth must be positive");
  const double h = bandwidth > 0.0 ? bandwidth : scott_bandwidth(samples);
  return KdeModel(samples, h);
}

double kde_ratio_predict(const KdeModel& q_model, const KdeModel& p_model, CovariateView x,
                         double floor, double ratio_max) {
  const double q = q_model.eval(x);
  const double p = p_model.eval(x);
  return clip(q / std::max(p, floor), 0.0, ratio_max);
}

KdeRatioModel::KdeRatioModel(KdeModel q_model, KdeModel p_model, double floor, double ratio_max)
    : q_(std::move(q_model)), p_(std::move(p_model)), floor_(floor), ratio_max_(ratio_max) {
  if (!(floor_ > 0.0)) throw ValidationError("kde ratio: floor must be positive");
}

Vector KdeRatioModel::predict(const Matrix& x) const {
  const Vector q = q_.eval(x);
  const Vector p = p_.eval(x);
  Vector r(x.rows());
  for (Eigen::Index i = 0; i < r.size(); ++i) r[i] = clip(q[i] / std::max(p[i], floor_), 0.0, ratio_max_);
  return r;
}

std::shared_ptr<const KdeRatioModel> fit_kde_ratio(const Matrix& hist_x, const Matrix& evl_x,
                                                   const KdeRatioOptions& options) {
  return std::make_shared<KdeRatioModel>(fit_kde(evl_x, options.evl_bandwidth),
                                         fit_kde(hist_x, options.hist_bandwidth), options.floor,
                                         options.ratio_max);
}

}  // namespace covshift
