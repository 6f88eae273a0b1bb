#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace cfl {

// Two-sample energy statistic (V-statistic form):
//   2 E|X-Y| - E|X-X'| - E|Y-Y'|
// with Euclidean norms; nonnegative, zero iff the laws coincide.
double energy_distance(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

struct PermTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  long n_x = 0, n_y = 0;  // sizes actually used (after subsampling)
};

// Permutation test of L(X) = L(Y) with the energy statistic. Univariate data
// uses an O(m log m + B m) sorted-prefix path; multivariate data precomputes
// the pooled distance matrix and caps each sample at `max_pairwise` rows by
// deterministic seeded subsampling. p = (1 + #{perm >= obs}) / (B + 1).
PermTestResult energy_permutation_test(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                       int permutations, std::uint64_t seed,
                                       int max_pairwise = 1024);

// Distance-covariance independence test of X against Y (paired rows),
// permuting the Y block. Same capping policy as above.
PermTestResult dcov_independence_test(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                      int permutations, std::uint64_t seed,
                                      int max_pairwise = 1024);

// Holm step-down adjustment; returns monotone adjusted p-values.
std::vector<double> holm_adjust(const std::vector<double>& p);

// Equal-mass binning: bin index in [0, k) per element, cut at k-quantiles.
std::vector<int> equal_mass_bins(const Eigen::VectorXd& values, int k);

// k interior quantiles (equispaced levels (i+0.5)/k) of a sample.
Eigen::VectorXd quantile_grid(const Eigen::VectorXd& values, int k);

// Deterministic without-replacement subsample of row indices.
std::vector<long> subsample_indices(long n, long k, std::uint64_t seed);

}  // namespace cfl
