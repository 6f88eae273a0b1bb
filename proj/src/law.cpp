#include "cfl/law.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfl/errors.hpp"
#include "cfl/rng.hpp"
#include "cfl/stats.hpp"

namespace cfl {

namespace {

constexpr double kProbSumTol = 1e-12;
constexpr double kCoordMergeTol = 1e-9;

// Sorts atoms lexicographically and merges coordinates equal within
// kCoordMergeTol, summing probabilities.
void normalize_table(Eigen::MatrixXd& coords, Eigen::VectorXd& probs) {
  const long n = coords.rows();
  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  std::sort(order.begin(), order.end(), [&](long a, long b) {
    for (Eigen::Index j = 0; j < coords.cols(); ++j) {
      if (coords(a, j) != coords(b, j)) return coords(a, j) < coords(b, j);
    }
    return false;
  });
  Eigen::MatrixXd out_coords(n, coords.cols());
  Eigen::VectorXd out_probs(n);
  long m = 0;
  for (long r = 0; r < n; ++r) {
    const long i = order[static_cast<std::size_t>(r)];
    bool merged = false;
    if (m > 0) {
      bool close = true;
      for (Eigen::Index j = 0; j < coords.cols(); ++j) {
        if (std::abs(coords(i, j) - out_coords(m - 1, j)) > kCoordMergeTol) {
          close = false;
          break;
        }
      }
      if (close) {
        out_probs(m - 1) += probs(i);
        merged = true;
      }
    }
    if (!merged) {
      out_coords.row(m) = coords.row(i);
      out_probs(m) = probs(i);
      ++m;
    }
  }
  coords = out_coords.topRows(m);
  probs = out_probs.head(m);
}

}  // namespace

Law Law::exact_table(std::vector<std::string> dims, Eigen::MatrixXd coords, Eigen::VectorXd probs) {
  if (coords.rows() != probs.size()) throw DimensionMismatch("atom/prob count mismatch");
  if (coords.cols() != static_cast<Eigen::Index>(dims.size())) {
    throw DimensionMismatch("coords/dims mismatch");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs(i) < 0.0) throw ValidationError("negative atom probability");
    sum += probs(i);
  }
  if (std::abs(sum - 1.0) > kProbSumTol) {
    throw ValidationError("atom probabilities sum to " + std::to_string(sum));
  }
  normalize_table(coords, probs);
  Law law;
  law.dims_ = std::move(dims);
  law.rep_ = ExactTableRep{std::move(coords), std::move(probs)};
  return law;
}

Law Law::gaussian_mixture(std::vector<std::string> dims, std::vector<GaussComponent> comps) {
  double sum = 0.0;
  for (const auto& c : comps) {
    if (c.mean.size() != static_cast<Eigen::Index>(dims.size()) ||
        c.cov.rows() != c.cov.cols() || c.cov.rows() != c.mean.size()) {
      throw DimensionMismatch("mixture component dimensions");
    }
    const double scale = std::max(1.0, c.cov.cwiseAbs().maxCoeff());
    if ((c.cov - c.cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
      throw ValidationError("mixture covariance is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.cov);
    if (c.cov.size() > 0 && es.eigenvalues().minCoeff() < -1e-9 * scale) {
      throw ValidationError("mixture covariance is not positive semidefinite");
    }
    sum += c.weight;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError("mixture weights sum to " + std::to_string(sum));
  }
  Law law;
  law.dims_ = std::move(dims);
  law.rep_ = GaussianMixtureRep{std::move(comps)};
  return law;
}

Law Law::empirical(std::vector<std::string> dims, Eigen::MatrixXd sample, std::uint64_t seed,
                   std::string generator_id) {
  if (sample.cols() != static_cast<Eigen::Index>(dims.size())) {
    throw DimensionMismatch("sample/dims mismatch");
  }
  Law law;
  law.dims_ = std::move(dims);
  law.rep_ = EmpiricalRep{std::move(sample), seed, std::move(generator_id)};
  return law;
}

Eigen::VectorXd Law::mean() const {
  if (is_exact()) {
    const auto& t = table();
    return t.coords.transpose() * t.probs;
  }
  if (is_gaussian()) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dimension());
    for (const auto& c : mixture().components) m += c.weight * c.mean;
    return m;
  }
  return empirical_rep().sample.colwise().mean();
}

Law Law::marginal(const std::vector<int>& coords) const {
  std::vector<std::string> dims;
  for (int c : coords) dims.push_back(dims_[static_cast<std::size_t>(c)]);
  if (is_exact()) {
    const auto& t = table();
    Eigen::MatrixXd sub(t.coords.rows(), static_cast<Eigen::Index>(coords.size()));
    for (std::size_t j = 0; j < coords.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = t.coords.col(coords[j]);
    return exact_table(std::move(dims), std::move(sub), t.probs);
  }
  if (is_gaussian()) {
    std::vector<GaussComponent> comps;
    for (const auto& c : mixture().components) {
      GaussComponent out;
      out.label = c.label;
      out.weight = c.weight;
      out.mean.resize(static_cast<Eigen::Index>(coords.size()));
      out.cov.resize(static_cast<Eigen::Index>(coords.size()), static_cast<Eigen::Index>(coords.size()));
      for (std::size_t a = 0; a < coords.size(); ++a) {
        out.mean(static_cast<Eigen::Index>(a)) = c.mean(coords[a]);
        for (std::size_t b = 0; b < coords.size(); ++b) {
          out.cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = c.cov(coords[a], coords[b]);
        }
      }
      comps.push_back(std::move(out));
    }
    return gaussian_mixture(std::move(dims), std::move(comps));
  }
  const auto& e = empirical_rep();
  Eigen::MatrixXd sub(e.sample.rows(), static_cast<Eigen::Index>(coords.size()));
  for (std::size_t j = 0; j < coords.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = e.sample.col(coords[j]);
  return empirical(std::move(dims), std::move(sub), e.seed, e.generator_id + "|marginal");
}

Eigen::MatrixXd Law::pseudo_sample(long n, std::uint64_t seed) const {
  if (is_empirical()) return empirical_rep().sample;
  if (is_exact()) {
    // Deterministic expansion with largest-remainder apportionment.
    const auto& t = table();
    const long k = t.probs.size();
    std::vector<long> counts(static_cast<std::size_t>(k), 0);
    std::vector<std::pair<double, long>> remainders;
    long assigned = 0;
    for (long i = 0; i < k; ++i) {
      const double ideal = t.probs(i) * static_cast<double>(n);
      counts[static_cast<std::size_t>(i)] = static_cast<long>(ideal);
      assigned += counts[static_cast<std::size_t>(i)];
      remainders.emplace_back(ideal - std::floor(ideal), i);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (long r = 0; assigned < n; ++r, ++assigned) {
      ++counts[static_cast<std::size_t>(remainders[static_cast<std::size_t>(r) % remainders.size()].second)];
    }
    Eigen::MatrixXd out(n, t.coords.cols());
    long row = 0;
    for (long i = 0; i < k; ++i) {
      for (long c = 0; c < counts[static_cast<std::size_t>(i)]; ++c) out.row(row++) = t.coords.row(i);
    }
    return out;
  }
  // Gaussian mixture: seeded draws, component counts by largest remainder.
  const auto& mix = mixture();
  const long k = static_cast<long>(mix.components.size());
  std::vector<long> counts(static_cast<std::size_t>(k), 0);
  {
    std::vector<std::pair<double, long>> remainders;
    long assigned = 0;
    for (long i = 0; i < k; ++i) {
      const double ideal = mix.components[static_cast<std::size_t>(i)].weight * static_cast<double>(n);
      counts[static_cast<std::size_t>(i)] = static_cast<long>(ideal);
      assigned += counts[static_cast<std::size_t>(i)];
      remainders.emplace_back(ideal - std::floor(ideal), i);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (long r = 0; assigned < n; ++r, ++assigned) {
      ++counts[static_cast<std::size_t>(remainders[static_cast<std::size_t>(r) % remainders.size()].second)];
    }
  }
  Eigen::MatrixXd out(n, dimension());
  long row = 0;
  RngStream rng(stream_key(seed, 3, 0x67617573ull));
  for (long i = 0; i < k; ++i) {
    const auto& c = mix.components[static_cast<std::size_t>(i)];
    // PSD square root via spectral decomposition (covariances may be singular).
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.cov);
    Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd root = es.eigenvectors() * lam.asDiagonal();
    for (long r = 0; r < counts[static_cast<std::size_t>(i)]; ++r) {
      Eigen::VectorXd z(dimension());
      for (int j = 0; j < dimension(); ++j) z(j) = rng.gaussian01();
      out.row(row++) = (c.mean + root * z).transpose();
    }
  }
  return out;
}

LawDistanceResult law_distance(const Law& a, const Law& b, const McBudget& budget) {
  if (a.dimension() != b.dimension()) {
    throw DimensionMismatch("law_distance over unequal dimensions");
  }
  LawDistanceResult res;
  if (a.is_exact() && b.is_exact()) {
    // Exact total variation over the merged support.
    const auto& ta = a.table();
    const auto& tb = b.table();
    const long na = ta.coords.rows(), nb = tb.coords.rows();
    Eigen::MatrixXd coords(na + nb, ta.coords.cols());
    coords.topRows(na) = ta.coords;
    coords.bottomRows(nb) = tb.coords;
    Eigen::VectorXd signed_mass(na + nb);
    signed_mass.head(na) = ta.probs;
    signed_mass.tail(nb) = -tb.probs;
    std::vector<long> order(static_cast<std::size_t>(na + nb));
    std::iota(order.begin(), order.end(), 0L);
    std::sort(order.begin(), order.end(), [&](long p, long q) {
      for (Eigen::Index j = 0; j < coords.cols(); ++j) {
        if (coords(p, j) != coords(q, j)) return coords(p, j) < coords(q, j);
      }
      return false;
    });
    double tv = 0.0;
    double group = 0.0;
    long rep = -1;
    for (long r = 0; r <= na + nb; ++r) {
      bool new_group = r == na + nb;
      if (!new_group && rep >= 0) {
        for (Eigen::Index j = 0; j < coords.cols(); ++j) {
          if (std::abs(coords(order[static_cast<std::size_t>(r)], j) - coords(rep, j)) >
              kCoordMergeTol) {
            new_group = true;
            break;
          }
        }
      }
      if (new_group) {
        tv += std::abs(group);
        group = 0.0;
      }
      if (r < na + nb) {
        group += signed_mass(order[static_cast<std::size_t>(r)]);
        rep = order[static_cast<std::size_t>(r)];
      }
    }
    res.statistic = 0.5 * tv;
    return res;
  }
  if (a.is_gaussian() && b.is_gaussian()) {
    // Component-wise comparison when the labels pair up.
    const auto& ma = a.mixture().components;
    const auto& mb = b.mixture().components;
    bool labels_match = ma.size() == mb.size();
    if (labels_match) {
      for (const auto& ca : ma) {
        bool found = false;
        for (const auto& cb : mb)
          if (cb.label == ca.label) found = true;
        if (!found) {
          labels_match = false;
          break;
        }
      }
    }
    if (labels_match) {
      double stat = 0.0;
      for (const auto& ca : ma) {
        for (const auto& cb : mb) {
          if (cb.label != ca.label) continue;
          stat = std::max(stat, std::abs(ca.weight - cb.weight));
          stat = std::max(stat, (ca.mean - cb.mean).cwiseAbs().maxCoeff());
          stat = std::max(stat, (ca.cov - cb.cov).cwiseAbs().maxCoeff());
        }
      }
      res.statistic = stat;
      return res;
    }
  }
  // Statistical comparison through sample representations.
  const Eigen::MatrixXd sa = a.pseudo_sample(budget.n, stream_key(budget.seed, 11));
  const Eigen::MatrixXd sb = b.pseudo_sample(budget.n, stream_key(budget.seed, 12));
  const auto test =
      energy_permutation_test(sa, sb, budget.permutations, budget.seed, budget.max_pairwise);
  res.statistic = test.statistic;
  res.p_value = test.p_value;
  return res;
}

}  // namespace cfl
