#include "cfl/equivalence.hpp"

#include <cmath>
#include <cstdio>

#include "cfl/affine.hpp"
#include "cfl/errors.hpp"
#include "cfl/stats.hpp"

namespace cfl {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void check_shapes(const FunctionalRcm& a, const FunctionalRcm& b) {
  if (a.treatment_support() != b.treatment_support()) {
    throw DimensionMismatch("treatment supports differ");
  }
  if (a.covariate_dim() != b.covariate_dim() || a.outcome_dim() != b.outcome_dim()) {
    throw DimensionMismatch("covariate/outcome dimensions differ");
  }
}

bool enumerable(const FunctionalRcm& r) {
  for (const auto& s : r.noise().specs()) {
    if (!s.finite_support()) return false;
  }
  return true;
}

// Rows (T, X, selected Y_t blocks) of a generated batch.
Eigen::MatrixXd flatten(const RcmBatch& rb, const std::vector<int>& levels) {
  const long n = rb.t.size();
  const long d = rb.x.cols();
  const long p = rb.y.cols();
  Eigen::MatrixXd out(n, 1 + d + static_cast<long>(levels.size()) * p);
  out.col(0) = rb.t;
  out.middleCols(1, d) = rb.x;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    out.middleCols(1 + d + static_cast<long>(k) * p, p) = rb.y_t[static_cast<std::size_t>(levels[k])];
  }
  return out;
}

std::vector<std::string> flat_dims(const FunctionalRcm& r, const std::vector<int>& levels) {
  std::vector<std::string> dims{"T"};
  for (int j = 0; j < r.covariate_dim(); ++j) dims.push_back("X" + std::to_string(j));
  for (int lvl : levels) {
    for (int i = 0; i < r.outcome_dim(); ++i) {
      dims.push_back("Y" + std::to_string(lvl) + "_" + std::to_string(i));
    }
  }
  return dims;
}

// Law-equality verdict from either an exact TV or a permutation p-value.
EquivalenceVerdict law_verdict(EquivalenceLevel level, const FunctionalRcm& a,
                               const FunctionalRcm& b, const std::vector<int>& levels,
                               const McBudget& budget) {
  EquivalenceVerdict v;
  v.level = level;
  if (enumerable(a) && enumerable(b)) {
    const AtomTable atoms_a = enumerate_noise(a.noise());
    const AtomTable atoms_b = enumerate_noise(b.noise());
    const Law la = Law::exact_table(flat_dims(a, levels), flatten(a.generate(atoms_a.coords), levels),
                                    atoms_a.probs);
    const Law lb = Law::exact_table(flat_dims(b, levels), flatten(b.generate(atoms_b.coords), levels),
                                    atoms_b.probs);
    v.statistic = law_distance(la, lb).statistic;
    v.threshold = 1e-12;
    v.verdict = v.statistic <= v.threshold ? Verdict::Equal : Verdict::NotEqual;
    if (v.verdict == Verdict::NotEqual) v.witness = "total variation " + fmt(v.statistic);
    return v;
  }
  // Shared-space linear-gaussian pairs compare exactly through their mixture
  // representations (one component per discrete-noise assignment).
  if (a.noise() == b.noise()) {
    const auto rep_a = mixture_rep(a.program());
    const auto rep_b = mixture_rep(b.program());
    if (rep_a && rep_b) {
      auto columns = [&](const FunctionalRcm& r) {
        std::vector<std::string> c{r.t_column()};
        for (const auto& x : r.x_columns()) c.push_back(x);
        for (int lvl : levels) {
          for (const auto& y : r.po_columns()[static_cast<std::size_t>(lvl)]) c.push_back(y);
        }
        return c;
      };
      const Law la = Law::gaussian_mixture(
          flat_dims(a, levels), rep_a->marginal_law(columns(a)).mixture().components);
      const Law lb = Law::gaussian_mixture(
          flat_dims(b, levels), rep_b->marginal_law(columns(b)).mixture().components);
      const auto dist = law_distance(la, lb);
      if (!dist.p_value) {
        v.statistic = dist.statistic;
        v.threshold = 1e-9;
        v.verdict = v.statistic <= v.threshold ? Verdict::Equal : Verdict::NotEqual;
        if (v.verdict == Verdict::NotEqual) {
          v.witness = "mixture parameter discrepancy " + fmt(v.statistic);
        }
        return v;
      }
    }
  }
  // Independently seeded samples from each model.
  const NoiseBatch batch_a = sample_noise(a.noise(), stream_key(budget.seed, 21), budget.n);
  const NoiseBatch batch_b = sample_noise(b.noise(), stream_key(budget.seed, 22), budget.n);
  const Eigen::MatrixXd sa = flatten(a.generate(batch_a.values), levels);
  const Eigen::MatrixXd sb = flatten(b.generate(batch_b.values), levels);
  const auto test =
      energy_permutation_test(sa, sb, budget.permutations, budget.seed, budget.max_pairwise);
  v.p_value = test.p_value;
  v.statistic = 1.0 - test.p_value;
  v.threshold = 1.0 - budget.significance;
  if (test.p_value < budget.significance) {
    v.verdict = Verdict::NotEqual;
    v.witness = "energy statistic " + fmt(test.statistic) + ", p=" + fmt(test.p_value);
  } else if (test.p_value < 0.05) {
    v.verdict = Verdict::Inconclusive;
  } else {
    v.verdict = Verdict::Equal;
  }
  return v;
}

}  // namespace

EquivalenceVerdict compare_almost_sure(const FunctionalRcm& a, const FunctionalRcm& b,
                                       const McBudget& budget, double tol) {
  if (!(a.noise() == b.noise())) {
    throw SpaceMismatch("almost-sure comparison is undefined across noise spaces");
  }
  check_shapes(a, b);
  EquivalenceVerdict v;
  v.level = EquivalenceLevel::AlmostSure;
  v.threshold = tol;

  Eigen::MatrixXd noise_values;
  Eigen::VectorXd mass;
  if (enumerable(a)) {
    const AtomTable atoms = enumerate_noise(a.noise());
    noise_values = atoms.coords;
    mass = atoms.probs;
  } else {
    noise_values = sample_noise(a.noise(), budget.seed, budget.n).values;
    mass = Eigen::VectorXd::Ones(noise_values.rows());
  }
  const RcmBatch ra = a.generate(noise_values);
  const RcmBatch rb = b.generate(noise_values);
  double worst = 0.0;
  long worst_row = -1;
  int worst_level = -1;
  for (long i = 0; i < noise_values.rows(); ++i) {
    if (mass(i) <= 0.0) continue;
    for (std::size_t t = 0; t < a.treatment_support().size(); ++t) {
      const double dev = (ra.y_t[t].row(i) - rb.y_t[t].row(i)).cwiseAbs().maxCoeff();
      if (dev > worst) {
        worst = dev;
        worst_row = i;
        worst_level = static_cast<int>(t);
      }
    }
  }
  v.statistic = worst;
  v.verdict = worst <= tol ? Verdict::Equal : Verdict::NotEqual;
  if (v.verdict == Verdict::NotEqual) {
    v.witness = "draw " + std::to_string(worst_row) + ", t=" + std::to_string(worst_level) +
                ": |Y_t(a) - Y_t(b)| = " + fmt(worst) + " (Y_t(a)=" +
                fmt(ra.y_t[static_cast<std::size_t>(worst_level)](worst_row, 0)) + ", Y_t(b)=" +
                fmt(rb.y_t[static_cast<std::size_t>(worst_level)](worst_row, 0)) + ")";
  }
  return v;
}

EquivalenceVerdict compare_cross_outcome(const FunctionalRcm& a, const FunctionalRcm& b,
                                         const McBudget& budget) {
  check_shapes(a, b);
  std::vector<int> levels;
  for (int t : a.treatment_support()) levels.push_back(t);
  return law_verdict(EquivalenceLevel::CrossOutcome, a, b, levels, budget);
}

EquivalenceVerdict compare_single_outcome(const FunctionalRcm& a, const FunctionalRcm& b,
                                          const McBudget& budget) {
  check_shapes(a, b);
  EquivalenceVerdict out;
  out.level = EquivalenceLevel::SingleOutcome;
  out.verdict = Verdict::Equal;
  bool any_inconclusive = false;
  for (std::size_t t = 0; t < a.treatment_support().size(); ++t) {
    McBudget sub = budget;
    sub.seed = stream_key(budget.seed, 31 + t);
    const EquivalenceVerdict vt = law_verdict(EquivalenceLevel::SingleOutcome, a, b,
                                              {static_cast<int>(t)}, sub);
    out.per_t_detail[static_cast<int>(t)] = vt.p_value ? *vt.p_value : vt.statistic;
    out.statistic = std::max(out.statistic, vt.statistic);
    out.threshold = vt.threshold;
    if (vt.p_value && (!out.p_value || *vt.p_value < *out.p_value)) out.p_value = vt.p_value;
    if (vt.verdict == Verdict::NotEqual) {
      out.verdict = Verdict::NotEqual;
      if (out.witness.empty()) out.witness = "t=" + std::to_string(t) + ": " + vt.witness;
    } else if (vt.verdict == Verdict::Inconclusive) {
      any_inconclusive = true;
    }
  }
  if (out.verdict == Verdict::Equal && any_inconclusive) out.verdict = Verdict::Inconclusive;
  return out;
}

}  // namespace cfl
