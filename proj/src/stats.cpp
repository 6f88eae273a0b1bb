#include "cfl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfl/errors.hpp"
#include "cfl/rng.hpp"

namespace cfl {

namespace {

double pair_sum_within(const Eigen::MatrixXd& d, const std::vector<int>& idx) {
  double s = 0.0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      s += d(idx[a], idx[b]);
    }
  }
  return s;
}

// For pooled values sorted ascending with group labels, returns the within-
// group pair sums (sum over i<j in the group of v_j - v_i) for both groups in
// one pass.
std::pair<double, double> sorted_within_sums(const std::vector<double>& v,
                                             const std::vector<int>& label) {
  double s[2] = {0.0, 0.0};
  double run_sum[2] = {0.0, 0.0};
  long run_cnt[2] = {0, 0};
  for (std::size_t i = 0; i < v.size(); ++i) {
    const int g = label[i];
    s[g] += run_cnt[g] * v[i] - run_sum[g];
    run_sum[g] += v[i];
    ++run_cnt[g];
  }
  return {s[0], s[1]};
}

double energy_from_sums(double s_xx, double s_yy, double s_xy, long n, long m) {
  return 2.0 * s_xy / (static_cast<double>(n) * m) - 2.0 * s_xx / (static_cast<double>(n) * n) -
         2.0 * s_yy / (static_cast<double>(m) * m);
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<long>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  return out;
}

void shuffle(std::vector<int>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.index(i)]);
  }
}

}  // namespace

std::vector<long> subsample_indices(long n, long k, std::uint64_t seed) {
  std::vector<long> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0L);
  if (k >= n) return idx;
  RngStream rng(stream_key(seed, 0, 0x73756273ull));
  // Partial Fisher-Yates: the first k positions form the sample.
  for (long i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<long>(rng.index(static_cast<std::size_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

double energy_distance(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.cols() != y.cols()) throw DimensionMismatch("energy_distance over unequal dimensions");
  const long n = x.rows(), m = y.rows();
  if (n == 0 || m == 0) throw ValidationError("energy_distance needs nonempty samples");
  double s_xx = 0, s_yy = 0, s_xy = 0;
  for (long i = 0; i < n; ++i)
    for (long j = i + 1; j < n; ++j) s_xx += (x.row(i) - x.row(j)).norm();
  for (long i = 0; i < m; ++i)
    for (long j = i + 1; j < m; ++j) s_yy += (y.row(i) - y.row(j)).norm();
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < m; ++j) s_xy += (x.row(i) - y.row(j)).norm();
  return energy_from_sums(s_xx, s_yy, s_xy, n, m);
}

PermTestResult energy_permutation_test(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                       int permutations, std::uint64_t seed, int max_pairwise) {
  if (x.cols() != y.cols()) throw DimensionMismatch("energy test over unequal dimensions");
  if (x.rows() < 1 || y.rows() < 1) throw ValidationError("energy test needs nonempty samples");

  // The cap bounds both the pairwise cost and the resolution of the test;
  // callers comparing binned conditionals rely on it to keep within-bin
  // approximation bias below detectability.
  const bool univariate = x.cols() == 1;
  Eigen::MatrixXd xs = x, ys = y;
  if (x.rows() > max_pairwise) xs = take_rows(x, subsample_indices(x.rows(), max_pairwise, seed));
  if (y.rows() > max_pairwise)
    ys = take_rows(y, subsample_indices(y.rows(), max_pairwise, seed ^ 0x9e37ull));
  const long n = xs.rows(), m = ys.rows();
  const long pooled = n + m;

  PermTestResult res;
  res.n_x = n;
  res.n_y = m;
  RngStream rng(stream_key(seed, 1, 0x70657267ull));

  if (univariate) {
    // Sort the pooled sample once; every permutation is an O(pooled) pass.
    std::vector<double> v(static_cast<std::size_t>(pooled));
    std::vector<int> label(static_cast<std::size_t>(pooled));
    std::vector<std::size_t> order(static_cast<std::size_t>(pooled));
    for (long i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = xs(i, 0);
    for (long j = 0; j < m; ++j) v[static_cast<std::size_t>(n + j)] = ys(j, 0);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> sorted(v.size());
    std::vector<int> base_label(v.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      sorted[k] = v[order[k]];
      base_label[k] = order[k] < static_cast<std::size_t>(n) ? 0 : 1;
    }
    // Total pair sum, for the cross term.
    double s_tot = 0.0;
    {
      double run_sum = 0.0;
      for (std::size_t k = 0; k < sorted.size(); ++k) {
        s_tot += static_cast<double>(k) * sorted[k] - run_sum;
        run_sum += sorted[k];
      }
    }
    auto stat_for = [&](const std::vector<int>& label_sorted) {
      auto [s0, s1] = sorted_within_sums(sorted, label_sorted);
      return energy_from_sums(s0, s1, s_tot - s0 - s1, n, m);
    };
    res.statistic = stat_for(base_label);
    // Permute labels; assignment to sorted positions is what matters.
    std::vector<int> perm = base_label;
    int geq = 0;
    for (int b = 0; b < permutations; ++b) {
      shuffle(perm, rng);
      if (stat_for(perm) >= res.statistic) ++geq;
    }
    res.p_value = (1.0 + geq) / (permutations + 1.0);
    return res;
  }

  Eigen::MatrixXd pool(pooled, xs.cols());
  pool.topRows(n) = xs;
  pool.bottomRows(m) = ys;
  Eigen::MatrixXd dist(pooled, pooled);
  double s_tot = 0.0;
  for (long i = 0; i < pooled; ++i) {
    dist(i, i) = 0.0;
    for (long j = i + 1; j < pooled; ++j) {
      const double d = (pool.row(i) - pool.row(j)).norm();
      dist(i, j) = d;
      dist(j, i) = d;
      s_tot += d;
    }
  }
  std::vector<int> members_x(static_cast<std::size_t>(n)), members_y(static_cast<std::size_t>(m));
  std::iota(members_x.begin(), members_x.end(), 0);
  std::iota(members_y.begin(), members_y.end(), static_cast<int>(n));
  const double s_xx0 = pair_sum_within(dist, members_x);
  const double s_yy0 = pair_sum_within(dist, members_y);
  res.statistic = energy_from_sums(s_xx0, s_yy0, s_tot - s_xx0 - s_yy0, n, m);

  std::vector<int> idx(static_cast<std::size_t>(pooled));
  std::iota(idx.begin(), idx.end(), 0);
  int geq = 0;
  std::vector<int> grp_x(static_cast<std::size_t>(n));
  for (int b = 0; b < permutations; ++b) {
    shuffle(idx, rng);
    grp_x.assign(idx.begin(), idx.begin() + n);
    std::vector<int> grp_y(idx.begin() + n, idx.end());
    const double s_xx = pair_sum_within(dist, grp_x);
    const double s_yy = pair_sum_within(dist, grp_y);
    const double stat = energy_from_sums(s_xx, s_yy, s_tot - s_xx - s_yy, n, m);
    if (stat >= res.statistic) ++geq;
  }
  res.p_value = (1.0 + geq) / (permutations + 1.0);
  return res;
}

PermTestResult dcov_independence_test(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                      int permutations, std::uint64_t seed, int max_pairwise) {
  if (x.rows() != y.rows()) throw DimensionMismatch("dcov needs paired rows");
  Eigen::MatrixXd xs = x, ys = y;
  if (x.rows() > max_pairwise) {
    const auto idx = subsample_indices(x.rows(), max_pairwise, seed);
    xs = take_rows(x, idx);
    ys = take_rows(y, idx);
  }
  const long n = xs.rows();
  auto centered = [&](const Eigen::MatrixXd& z) {
    Eigen::MatrixXd d(n, n);
    for (long i = 0; i < n; ++i) {
      d(i, i) = 0.0;
      for (long j = i + 1; j < n; ++j) {
        const double v = (z.row(i) - z.row(j)).norm();
        d(i, j) = v;
        d(j, i) = v;
      }
    }
    const Eigen::VectorXd row_mean = d.rowwise().mean();
    const double grand = d.mean();
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < n; ++j) d(i, j) += grand - row_mean(i) - row_mean(j);
    return d;
  };
  const Eigen::MatrixXd a = centered(xs);
  const Eigen::MatrixXd b = centered(ys);
  auto dcov2 = [&](const std::vector<int>& perm) {
    double s = 0.0;
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < n; ++j) s += a(i, j) * b(perm[static_cast<std::size_t>(i)],
                                                    perm[static_cast<std::size_t>(j)]);
    return s / (static_cast<double>(n) * n);
  };
  std::vector<int> id(static_cast<std::size_t>(n));
  std::iota(id.begin(), id.end(), 0);
  PermTestResult res;
  res.n_x = n;
  res.n_y = n;
  res.statistic = dcov2(id);
  RngStream rng(stream_key(seed, 2, 0x64636f76ull));
  int geq = 0;
  std::vector<int> perm = id;
  for (int bb = 0; bb < permutations; ++bb) {
    shuffle(perm, rng);
    if (dcov2(perm) >= res.statistic) ++geq;
  }
  res.p_value = (1.0 + geq) / (permutations + 1.0);
  return res;
}

std::vector<double> holm_adjust(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adj(m, 0.0);
  double running = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double v = std::min(1.0, static_cast<double>(m - k) * p[order[k]]);
    running = std::max(running, v);
    adj[order[k]] = running;
  }
  return adj;
}

std::vector<int> equal_mass_bins(const Eigen::VectorXd& values, int k) {
  const long n = values.size();
  if (k < 1) throw ValidationError("equal_mass_bins: k must be >= 1");
  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  std::sort(order.begin(), order.end(), [&](long a, long b) { return values(a) < values(b); });
  std::vector<int> bin(static_cast<std::size_t>(n));
  for (long r = 0; r < n; ++r) {
    bin[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] =
        static_cast<int>((static_cast<long long>(r) * k) / n);
  }
  return bin;
}

Eigen::VectorXd quantile_grid(const Eigen::VectorXd& values, int k) {
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());
  Eigen::VectorXd out(k);
  for (int i = 0; i < k; ++i) {
    const double level = (i + 0.5) / k;
    const double pos = level * (static_cast<double>(v.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    out(i) = v[lo] * (1.0 - frac) + v[hi] * frac;
  }
  return out;
}

}  // namespace cfl
