#pragma once

// Gaussian-kernel building blocks. Each routine exists twice: a plain serial
// loop kept as the reference, and an OpenMP version used by the library. The
// two must agree bit-for-bit since every entry is computed by the same
// arithmetic, only the loop schedule differs.

#include "covshift/core.hpp"

namespace covshift::kernels {

namespace serial {
/// D(i, j) = ||a_i - b_j||^2.
Matrix squared_distances(const Matrix& a, const Matrix& b);
/// G(i, j) = exp(-||a_i - b_j||^2 / (2 * bandwidth^2)).
Matrix gaussian_gram(const Matrix& a, const Matrix& b, double bandwidth);
/// s_i = sum_j exp(-||a_i - b_j||^2 / (2 * bandwidth^2)).
Vector gaussian_row_sums(const Matrix& a, const Matrix& b, double bandwidth);
}  // namespace serial

namespace parallel {
Matrix squared_distances(const Matrix& a, const Matrix& b);
Matrix gaussian_gram(const Matrix& a, const Matrix& b, double bandwidth);
Vector gaussian_row_sums(const Matrix& a, const Matrix& b, double bandwidth);
}  // namespace parallel

using parallel::gaussian_gram;
using parallel::gaussian_row_sums;
using parallel::squared_distances;

/// Median of pairwise Euclidean distances over at most `max_points` rows
/// (evenly strided). Falls back to 1.0 when every distance is zero.
double median_pairwise_distance(const Matrix& x, std::size_t max_points = 1000);

/// Same, over the union of two samples.
double median_pairwise_distance(const Matrix& a, const Matrix& b, std::size_t max_points = 1000);

/// Number of OpenMP threads the parallel kernels will use.
int thread_count();
void set_thread_count(int n);

}  // namespace covshift::kernels
