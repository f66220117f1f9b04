#include "covshift/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace covshift::kernels {

namespace {

void check_dims(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ValidationError("kernel: covariate dimensions differ");
}

void check_bandwidth(double bw) {
  if (!(bw > 0.0) || !std::isfinite(bw)) throw ValidationError("kernel: bandwidth must be positive");
}

inline double sqdist(const double* x, const double* y, Eigen::Index d) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    const double diff = x[k] - y[k];
    s += diff * diff;
  }
  return s;
}

}  // namespace

namespace serial {

Matrix squared_distances(const Matrix& a, const Matrix& b) {
  check_dims(a, b);
  const Eigen::Index d = a.cols();
  Matrix out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double* ai = a.data() + i * d;
    for (Eigen::Index j = 0; j < b.rows(); ++j) out(i, j) = sqdist(ai, b.data() + j * d, d);
  }
  return out;
}

Matrix gaussian_gram(const Matrix& a, const Matrix& b, double bandwidth) {
  check_dims(a, b);
  check_bandwidth(bandwidth);
  const double scale = -1.0 / (2.0 * bandwidth * bandwidth);
  const Eigen::Index d = a.cols();
  Matrix out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double* ai = a.data() + i * d;
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      out(i, j) = std::exp(scale * sqdist(ai, b.data() + j * d, d));
    }
  }
  return out;
}

Vector gaussian_row_sums(const Matrix& a, const Matrix& b, double bandwidth) {
  check_dims(a, b);
  check_bandwidth(bandwidth);
  const double scale = -1.0 / (2.0 * bandwidth * bandwidth);
  const Eigen::Index d = a.cols();
  Vector out(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double* ai = a.data() + i * d;
    double s = 0.0;
    for (Eigen::Index j = 0; j < b.rows(); ++j) s += std::exp(scale * sqdist(ai, b.data() + j * d, d));
    out[i] = s;
  }
  return out;
}

}  // namespace serial

namespace parallel {

Matrix squared_distances(const Matrix& a, const Matrix& b) {
  check_dims(a, b);
  const Eigen::Index d = a.cols();
  const Eigen::Index n = a.rows();
  const Eigen::Index m = b.rows();
  Matrix out(n, m);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* ai = a.data() + i * d;
    double* oi = out.data() + i * m;
    for (Eigen::Index j = 0; j < m; ++j) oi[j] = sqdist(ai, b.data() + j * d, d);
  }
  return out;
}

Matrix gaussian_gram(const Matrix& a, const Matrix& b, double bandwidth) {
  check_dims(a, b);
  check_bandwidth(bandwidth);
  const double scale = -1.0 / (2.0 * bandwidth * bandwidth);
  const Eigen::Index d = a.cols();
  const Eigen::Index n = a.rows();
  const Eigen::Index m = b.rows();
  Matrix out(n, m);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* ai = a.data() + i * d;
    double* oi = out.data() + i * m;
    for (Eigen::Index j = 0; j < m; ++j) oi[j] = std::exp(scale * sqdist(ai, b.data() + j * d, d));
  }
  return out;
}

Vector gaussian_row_sums(const Matrix& a, const Matrix& b, double bandwidth) {
  check_dims(a, b);
  check_bandwidth(bandwidth);
  const double scale = -1.0 / (2.0 * bandwidth * bandwidth);
  const Eigen::Index d = a.cols();
  const Eigen::Index n = a.rows();
  const Eigen::Index m = b.rows();
  Vector out(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* ai = a.data() + i * d;
    double s = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) s += std::exp(scale * sqdist(ai, b.data() + j * d, d));
    out[i] = s;
  }
  return out;
}

}  // namespace parallel

namespace {

double median_of_distances(const Matrix& pts) {
  std::vector<double> dist;
  const Eigen::Index n = pts.rows();
  dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dist.push_back(std::sqrt(sqdist(pts.data() + i * pts.cols(), pts.data() + j * pts.cols(),
                                      pts.cols())));
    }
  }
  if (dist.empty()) return 1.0;
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  return *mid > 0.0 ? *mid : 1.0;
}

Matrix strided(const Matrix& x, std::size_t max_points) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n <= max_points) return x;
  std::vector<std::size_t> idx(max_points);
  for (std::size_t k = 0; k < max_points; ++k) idx[k] = k * n / max_points;
  return select_rows(x, idx);
}

}  // namespace

double median_pairwise_distance(const Matrix& x, std::size_t max_points) {
  return median_of_distances(strided(x, max_points));
}

double median_pairwise_distance(const Matrix& a, const Matrix& b, std::size_t max_points) {
  check_dims(a, b);
  Matrix both(a.rows() + b.rows(), a.cols());
  both << a, b;
  return median_of_distances(strided(both, max_points));
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_thread_count(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace covshift::kernels
