#include "cfl/estimands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <set>

#include "cfl/affine.hpp"
#include "cfl/errors.hpp"
#include "cfl/stats.hpp"

namespace cfl {

namespace {

std::set<std::string> noise_closure(const ScmModel& m, const std::vector<std::string>& vars) {
  std::set<std::string> out;
  std::set<std::string> visited;
  std::vector<std::string> stack(vars.begin(), vars.end());
  while (!stack.empty()) {
    const std::string v = stack.back();
    stack.pop_back();
    if (!visited.insert(v).second) continue;
    for (const auto& u : m.exo_parents(v)) out.insert(u);
    for (const auto& p : m.endo_parents(v)) stack.push_back(p);
  }
  return out;
}

// Full substitution along the ancestry: the variable as affine in noises
// only (discrete noises stay symbolic coordinates).
std::optional<AffineForm> full_affine(const ScmModel& m, const std::string& var) {
  std::function<std::optional<AffineForm>(const std::string&)> resolve =
      [&](const std::string& name) -> std::optional<AffineForm> {
    if (m.is_variable(name)) return to_affine(m.equation(name), resolve);
    if (m.noise().has(name)) {
      AffineForm f;
      f.noise_coef[name] = 1.0;
      return f;
    }
    return std::nullopt;
  };
  return to_affine(m.equation(var), resolve);
}

double prior_noise_mean(const ScmModel& m, const std::string& u) {
  const int i = m.noise().index_of(u);
  if (i < 0) throw UnknownReference(u);
  return m.noise().spec(static_cast<std::size_t>(i)).mean();
}

double affine_prior_mean(const ScmModel& m, const AffineForm& f) {
  if (!f.var_coef.empty()) throw EngineInapplicable("unreduced variable in affine form");
  double v = f.c;
  for (const auto& [u, coef] : f.noise_coef) v += coef * prior_noise_mean(m, u);
  return v;
}

// E[affine(noises) | posterior] under a mixture posterior.
double affine_posterior_mean(const MixtureRep& rep, const Posterior& post, const AffineForm& f) {
  if (!f.var_coef.empty()) throw EngineInapplicable("unreduced variable in affine form");
  double out = 0.0;
  for (const auto& pc : post.components) {
    double v = f.c;
    for (const auto& [u, coef] : f.noise_coef) {
      const int ci = rep.cont_index(u);
      if (ci >= 0) {
        v += coef * pc.mean(ci);
      } else {
        // discrete noise: its value is fixed inside the component
        bool found = false;
        for (std::size_t j = 0; j < rep.disc_noises.size(); ++j) {
          if (rep.disc_noises[j] == u) {
            v += coef * rep.components[pc.component].discrete_values[j];
            found = true;
          }
        }
        if (!found) throw UnknownReference(u);
      }
    }
    out += pc.weight * v;
  }
  return out;
}

std::vector<std::pair<std::string, double>> x_evidence(const std::vector<std::string>& x_cols,
                                                       const Eigen::VectorXd& x) {
  if (x.size() != static_cast<Eigen::Index>(x_cols.size())) {
    throw DimensionMismatch("conditioning point has wrong dimension");
  }
  std::vector<std::pair<std::string, double>> ev;
  for (std::size_t j = 0; j < x_cols.size(); ++j) {
    ev.emplace_back(x_cols[j], x(static_cast<Eigen::Index>(j)));
  }
  return ev;
}

const std::string& single_outcome(const ScmModel& model) {
  if (model.roles().outcomes.size() != 1) {
    throw DimensionMismatch("effect estimands are defined for a scalar outcome");
  }
  return model.roles().outcomes.front();
}

// Windowed row selection |X_i - x_i| <= h_i with h = factor * sd per
// coordinate. For univariate X the window shrinks as (1e4/n)^(1/3): estimand
// pass bands are 4 standard errors wide, so the kernel bias must fall faster
// than the standard error as n grows. Multi-covariate windows keep the base
// factor (counts, not bias, are binding there).
std::vector<long> kernel_window(const Eigen::MatrixXd& x_mat, const Eigen::VectorXd& x,
                                double factor) {
  std::vector<long> rows;
  const long n = x_mat.rows();
  double shrink = 1.0;
  if (x_mat.cols() == 1 && n > 10000) {
    shrink = std::pow(1e4 / static_cast<double>(n), 1.0 / 3.0);
  }
  Eigen::VectorXd h(x_mat.cols());
  for (Eigen::Index j = 0; j < x_mat.cols(); ++j) {
    const double mean = x_mat.col(j).mean();
    const double sd = std::sqrt((x_mat.col(j).array() - mean).square().mean());
    h(j) = factor * shrink * sd;
  }
  for (long i = 0; i < n; ++i) {
    bool ok = true;
    for (Eigen::Index j = 0; j < x_mat.cols(); ++j) {
      if (std::abs(x_mat(i, j) - x(j)) > h(j)) {
        ok = false;
        break;
      }
    }
    if (ok) rows.push_back(i);
  }
  return rows;
}

// Widens the window (doubling the factor) until `need` predicate accepts the
// selection or the widening budget runs out; sparse tail strata otherwise
// starve at desk-scale sample sizes.
std::vector<long> adaptive_window(const Eigen::MatrixXd& x_mat, const Eigen::VectorXd& x,
                                  double factor,
                                  const std::function<bool(const std::vector<long>&)>& need) {
  std::vector<long> rows;
  for (int widen = 0; widen < 4; ++widen) {
    rows = kernel_window(x_mat, x, factor * static_cast<double>(1 << widen));
    if (need(rows)) return rows;
  }
  return rows;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  long n = 0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  out.n = static_cast<long>(v.size());
  if (v.empty()) return out;
  double s = 0.0;
  for (double x : v) s += x;
  out.mean = s / static_cast<double>(out.n);
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.se = out.n > 1 ? std::sqrt(ss / (static_cast<double>(out.n) * (out.n - 1.0))) : 0.0;
  return out;
}

// The noise-posterior deviation term of the identified CATE: for each
// exogenous parent U of the outcome equation (weighted by its coefficient),
// E[U | X=x, T=1] - E[U | X=x, T=0].
EstimandReport gap_impl(const ScmModel& model, const Eigen::VectorXd& x, Engine engine,
                        const McBudget& budget) {
  EstimandReport report;
  report.name = "relaxed_noise_cate_gap";
  report.engine = engine;
  report.x = x;
  const std::string& y = single_outcome(model);
  const auto aff = equation_affine(model, y);
  if (!aff) throw EngineInapplicable("outcome equation is not affine");
  const auto& roles = model.roles();

  if (engine == Engine::LinearGaussian) {
    std::set<std::string> tx_noises = noise_closure(model, {roles.treatment});
    for (const auto& nn : noise_closure(model, roles.covariates)) tx_noises.insert(nn);
    std::vector<std::pair<std::string, double>> dependent;
    for (const auto& [u, coef] : aff->noise_coef) {
      if (tx_noises.count(u) && coef != 0.0) dependent.emplace_back(u, coef);
    }
    if (dependent.empty()) {
      report.value = 0.0;
      return report;
    }
    const auto rep = mixture_rep(model);
    if (!rep) throw EngineInapplicable("model outside the linear-gaussian subclass");
    double levels[2] = {0.0, 0.0};
    for (int t = 0; t <= 1; ++t) {
      auto ev = x_evidence(roles.covariates, x);
      ev.emplace_back(roles.treatment, static_cast<double>(t));
      const Posterior post = condition_mixture(*rep, ev);
      AffineForm weighted;
      for (const auto& [u, coef] : dependent) weighted.noise_coef[u] = coef;
      levels[t] = affine_posterior_mean(*rep, post, weighted);
    }
    report.value = levels[1] - levels[0];
    return report;
  }

  if (engine == Engine::ExactDiscrete) {
    const AtomTable atoms = enumerate_noise(model.noise());
    const Eigen::MatrixXd solved = solve_on(model, atoms.coords);
    const int t_col = model.var_index(roles.treatment);
    double levels[2];
    for (int t = 0; t <= 1; ++t) {
      double mass = 0.0, acc = 0.0;
      for (Eigen::Index i = 0; i < atoms.probs.size(); ++i) {
        if (solved(i, t_col) != static_cast<double>(t)) continue;
        bool match = true;
        for (std::size_t j = 0; j < roles.covariates.size(); ++j) {
          if (std::abs(solved(i, model.var_index(roles.covariates[j])) -
                       x(static_cast<Eigen::Index>(j))) > 1e-9) {
            match = false;
            break;
          }
        }
        if (!match) continue;
        double v = 0.0;
        for (const auto& [u, coef] : aff->noise_coef) {
          v += coef * atoms.coords(i, model.noise().index_of(u));
        }
        mass += atoms.probs(i);
        acc += atoms.probs(i) * v;
      }
      if (mass <= 0.0) throw EmptyAcceptance("no atoms with T=" + std::to_string(t) + ", X=x");
      levels[t] = acc / mass;
    }
    report.value = levels[1] - levels[0];
    return report;
  }

  // Monte Carlo: observational draws carry their own noises.
  const NoiseBatch batch = sample_noise(model.noise(), budget.seed, budget.n);
  const Eigen::MatrixXd solved = solve_on(model, batch.values);
  const int t_col = model.var_index(roles.treatment);
  Eigen::MatrixXd x_mat(solved.rows(), static_cast<Eigen::Index>(roles.covariates.size()));
  for (std::size_t j = 0; j < roles.covariates.size(); ++j) {
    x_mat.col(static_cast<Eigen::Index>(j)) = solved.col(model.var_index(roles.covariates[j]));
  }
  const auto window = adaptive_window(x_mat, x, budget.bandwidth_factor, [&](const auto& rows) {
    long c0 = 0, c1 = 0;
    for (long i : rows) {
      if (solved(i, t_col) == 0.0) ++c0;
      if (solved(i, t_col) == 1.0) ++c1;
    }
    return c0 >= 8 && c1 >= 8;
  });
  std::vector<double> vals[2];
  for (long i : window) {
    const double tval = solved(i, t_col);
    if (tval != 0.0 && tval != 1.0) continue;
    double v = 0.0;
    for (const auto& [u, coef] : aff->noise_coef) {
      v += coef * batch.values(i, model.noise().index_of(u));
    }
    vals[tval == 1.0 ? 1 : 0].push_back(v);
  }
  if (vals[0].empty() || vals[1].empty()) {
    throw EmptyAcceptance("kernel window contains an empty treatment stratum");
  }
  const MeanSe m1 = mean_se(vals[1]);
  const MeanSe m0 = mean_se(vals[0]);
  report.value = m1.mean - m0.mean;
  report.standard_error = std::sqrt(m1.se * m1.se + m0.se * m0.se);
  return report;
}

}  // namespace

std::vector<Eigen::VectorXd> covariate_grid(const ObservationalView& obs, int points,
                                            std::uint64_t seed) {
  const int d = static_cast<int>(obs.x_columns().size());
  if (d == 0) return {Eigen::VectorXd()};
  const auto s = obs.sample(seed, 4096);
  std::vector<long> order(static_cast<std::size_t>(s.x.rows()));
  std::iota(order.begin(), order.end(), 0L);
  std::sort(order.begin(), order.end(), [&](long a, long b) { return s.x(a, 0) < s.x(b, 0); });
  std::vector<Eigen::VectorXd> grid;
  for (int i = 0; i < points; ++i) {
    const double level = (i + 0.5) / points;
    const long rank = std::min<long>(static_cast<long>(level * static_cast<double>(s.x.rows())),
                                     s.x.rows() - 1);
    grid.push_back(s.x.row(order[static_cast<std::size_t>(rank)]).transpose());
  }
  return grid;
}

EstimandReport cate_rcm(const ObservationalView& obs, const Eigen::VectorXd& x, Engine engine,
                        const McBudget& budget) {
  EstimandReport report;
  report.name = "cate_rcm";
  report.engine = engine;
  report.x = x;

  if (engine == Engine::LinearGaussian) {
    if (obs.y_columns().empty()) {
      throw EngineInapplicable("analytic identification needs explicit outcome equations");
    }
    const ScmModel& model = obs.program();
    const std::string& y = single_outcome(model);
    const auto aff = equation_affine(model, y);
    if (!aff) throw EngineInapplicable("outcome equation is not affine");
    const auto& roles = model.roles();
    for (const auto& [v, coef] : aff->var_coef) {
      if (coef == 0.0 || v == roles.treatment) continue;
      if (std::find(roles.covariates.begin(), roles.covariates.end(), v) ==
          roles.covariates.end()) {
        throw EngineInapplicable("outcome equation has a parent outside {T} and X: " + v);
      }
    }
    const double c_t = aff->coef_of_var(roles.treatment);
    const EstimandReport gap = gap_impl(model, x, engine, budget);
    report.value = c_t + gap.value;
    return report;
  }

  if (engine == Engine::ExactDiscrete) {
    const Law joint = obs.exact_joint();
    const auto& table = joint.table();
    const int d = static_cast<int>(obs.x_columns().size());
    double mass[2] = {0, 0}, acc[2] = {0, 0};
    for (Eigen::Index i = 0; i < table.probs.size(); ++i) {
      bool match = true;
      for (int j = 0; j < d; ++j) {
        if (std::abs(table.coords(i, 1 + j) - x(j)) > 1e-9) {
          match = false;
          break;
        }
      }
      if (!match) continue;
      const double t = table.coords(i, 0);
      if (t != 0.0 && t != 1.0) continue;
      const int k = t == 1.0 ? 1 : 0;
      mass[k] += table.probs(i);
      acc[k] += table.probs(i) * table.coords(i, 1 + d);
    }
    if (mass[0] <= 0.0 || mass[1] <= 0.0) {
      throw PositivityViolation("an observational stratum at X=x is empty");
    }
    report.value = acc[1] / mass[1] - acc[0] / mass[0];
    return report;
  }

  const auto s = obs.sample(budget.seed, budget.n);
  const auto window = adaptive_window(s.x, x, budget.bandwidth_factor, [&](const auto& rows) {
    long c0 = 0, c1 = 0;
    for (long i : rows) {
      if (s.t(i) == 0.0) ++c0;
      if (s.t(i) == 1.0) ++c1;
    }
    return c0 >= 8 && c1 >= 8;
  });
  std::vector<double> vals[2];
  for (long i : window) {
    const double t = s.t(i);
    if (t == 0.0) vals[0].push_back(s.y(i, 0));
    if (t == 1.0) vals[1].push_back(s.y(i, 0));
  }
  if (vals[0].empty() || vals[1].empty()) {
    throw PositivityViolation("kernel window contains an empty treatment stratum");
  }
  const MeanSe m1 = mean_se(vals[1]);
  const MeanSe m0 = mean_se(vals[0]);
  report.value = m1.mean - m0.mean;
  report.standard_error = std::sqrt(m1.se * m1.se + m0.se * m0.se);
  return report;
}

EstimandReport cate_scm(const ScmModel& model, const Eigen::VectorXd& x, Engine engine,
                        const McBudget& budget) {
  EstimandReport report;
  report.name = "cate_scm";
  report.engine = engine;
  report.x = x;
  const std::string& y = single_outcome(model);
  const auto& roles = model.roles();

  if (engine == Engine::LinearGaussian) {
    const auto a1 = full_affine(apply_do(model, Intervention::on(roles.treatment, 1.0)), y);
    const auto a0 = full_affine(apply_do(model, Intervention::on(roles.treatment, 0.0)), y);
    if (!a1 || !a0) throw EngineInapplicable("intervened outcome is not affine in the noises");
    AffineForm diff = *a1;
    diff -= *a0;
    bool constant = diff.var_coef.empty();
    for (const auto& [u, coef] : diff.noise_coef) constant = constant && coef == 0.0;
    if (constant) {
      // The coupled difference is degenerate; conditioning cannot change it.
      report.value = diff.c;
      return report;
    }
    const auto rep = mixture_rep(model);
    if (!rep) {
      throw EngineInapplicable("conditioning path outside the linear-gaussian subclass");
    }
    const Posterior post = condition_mixture(*rep, x_evidence(roles.covariates, x));
    report.value = affine_posterior_mean(*rep, post, diff);
    return report;
  }

  if (engine == Engine::ExactDiscrete) {
    const AtomTable atoms = enumerate_noise(model.noise());
    const Eigen::MatrixXd solved = solve_on(model, atoms.coords);
    const Eigen::MatrixXd s1 =
        solve_on(apply_do(model, Intervention::on(roles.treatment, 1.0)), atoms.coords);
    const Eigen::MatrixXd s0 =
        solve_on(apply_do(model, Intervention::on(roles.treatment, 0.0)), atoms.coords);
    const int y_col = model.var_index(y);
    double mass = 0.0, acc = 0.0;
    for (Eigen::Index i = 0; i < atoms.probs.size(); ++i) {
      bool match = true;
      for (std::size_t j = 0; j < roles.covariates.size(); ++j) {
        if (std::abs(solved(i, model.var_index(roles.covariates[j])) -
                     x(static_cast<Eigen::Index>(j))) > 1e-9) {
          match = false;
          break;
        }
      }
      if (!match) continue;
      mass += atoms.probs(i);
      acc += atoms.probs(i) * (s1(i, y_col) - s0(i, y_col));
    }
    if (mass <= 0.0) throw EmptyAcceptance("X=x has zero probability");
    report.value = acc / mass;
    return report;
  }

  // Monte Carlo: abduction by kernel rejection on the factual covariates,
  // then coupled do-interventions on the accepted noise draws.
  const NoiseBatch batch = sample_noise(model.noise(), budget.seed, budget.n);
  const Eigen::MatrixXd solved = solve_on(model, batch.values);
  Eigen::MatrixXd x_mat(solved.rows(), static_cast<Eigen::Index>(roles.covariates.size()));
  for (std::size_t j = 0; j < roles.covariates.size(); ++j) {
    x_mat.col(static_cast<Eigen::Index>(j)) = solved.col(model.var_index(roles.covariates[j]));
  }
  const auto window = adaptive_window(x_mat, x, budget.bandwidth_factor, [](const auto& rows) {
    return static_cast<long>(rows.size()) >= 16;
  });
  if (window.empty()) throw EmptyAcceptance("kernel rejection accepted 0 draws");
  Eigen::MatrixXd posterior_noise(static_cast<Eigen::Index>(window.size()), batch.values.cols());
  for (std::size_t r = 0; r < window.size(); ++r) posterior_noise.row(static_cast<Eigen::Index>(r)) = batch.values.row(window[r]);
  const Eigen::MatrixXd s1 =
      solve_on(apply_do(model, Intervention::on(roles.treatment, 1.0)), posterior_noise);
  const Eigen::MatrixXd s0 =
      solve_on(apply_do(model, Intervention::on(roles.treatment, 0.0)), posterior_noise);
  const int y_col = model.var_index(y);
  std::vector<double> diffs;
  diffs.reserve(window.size());
  for (Eigen::Index i = 0; i < posterior_noise.rows(); ++i) {
    diffs.push_back(s1(i, y_col) - s0(i, y_col));
  }
  const MeanSe m = mean_se(diffs);
  report.value = m.mean;
  report.standard_error = m.se;
  return report;
}

EstimandReport direct_effect_scm(const ScmModel& model, const Eigen::VectorXd& x, Engine engine,
                                 const McBudget& budget) {
  EstimandReport report;
  report.name = "direct_effect_scm";
  report.engine = engine;
  report.x = x;
  const std::string& y = single_outcome(model);
  const auto& roles = model.roles();
  auto make_iv = [&](double t) {
    Intervention iv = Intervention::on(roles.treatment, t);
    for (std::size_t j = 0; j < roles.covariates.size(); ++j) {
      iv.and_on(roles.covariates[j], x(static_cast<Eigen::Index>(j)));
    }
    return iv;
  };

  if (engine == Engine::LinearGaussian) {
    const auto a1 = full_affine(apply_do(model, make_iv(1.0)), y);
    const auto a0 = full_affine(apply_do(model, make_iv(0.0)), y);
    if (!a1 || !a0) throw EngineInapplicable("intervened outcome is not affine in the noises");
    AffineForm diff = *a1;
    diff -= *a0;
    report.value = affine_prior_mean(model, diff);
    return report;
  }

  Eigen::MatrixXd noise_values;
  Eigen::VectorXd mass;
  if (engine == Engine::ExactDiscrete) {
    const AtomTable atoms = enumerate_noise(model.noise());
    noise_values = atoms.coords;
    mass = atoms.probs;
  } else {
    noise_values = sample_noise(model.noise(), budget.seed, budget.n).values;
    mass = Eigen::VectorXd::Ones(noise_values.rows());
  }
  const Eigen::MatrixXd s1 = solve_on(apply_do(model, make_iv(1.0)), noise_values);
  const Eigen::MatrixXd s0 = solve_on(apply_do(model, make_iv(0.0)), noise_values);
  const int y_col = model.var_index(y);
  if (engine == Engine::ExactDiscrete) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < mass.size(); ++i) acc += mass(i) * (s1(i, y_col) - s0(i, y_col));
    report.value = acc;
    return report;
  }
  std::vector<double> diffs;
  for (Eigen::Index i = 0; i < noise_values.rows(); ++i) diffs.push_back(s1(i, y_col) - s0(i, y_col));
  const MeanSe m = mean_se(diffs);
  report.value = m.mean;
  report.standard_error = m.se;
  return report;
}

EstimandReport interventional_cate(const ScmModel& model, const Eigen::VectorXd& x, Engine engine,
                                   const McBudget& budget) {
  EstimandReport report;
  report.name = "interventional_cate";
  report.engine = engine;
  report.x = x;
  const std::string& y = single_outcome(model);
  const auto& roles = model.roles();

  double level_mean[2];
  double level_se[2] = {0.0, 0.0};
  for (int t = 0; t <= 1; ++t) {
    const ScmModel m_t = apply_do(model, Intervention::on(roles.treatment, static_cast<double>(t)));
    if (engine == Engine::LinearGaussian) {
      const auto rep_t = mixture_rep(m_t);
      if (!rep_t) throw EngineInapplicable("intervened model outside the linear-gaussian subclass");
      try {
        const Posterior post = condition_mixture(*rep_t, x_evidence(roles.covariates, x));
        level_mean[t] = posterior_law(*rep_t, post, {y}).mean()(0);
      } catch (const ZeroProbabilityEvidence&) {
        throw EmptyAcceptance("L(X_{T=t}) has no mass at x for t=" + std::to_string(t));
      }
      continue;
    }
    Eigen::MatrixXd noise_values;
    Eigen::VectorXd mass;
    if (engine == Engine::ExactDiscrete) {
      const AtomTable atoms = enumerate_noise(model.noise());
      noise_values = atoms.coords;
      mass = atoms.probs;
    } else {
      noise_values = sample_noise(model.noise(), stream_key(budget.seed, 40 + t), budget.n).values;
      mass = Eigen::VectorXd::Ones(noise_values.rows());
    }
    const Eigen::MatrixXd solved = solve_on(m_t, noise_values);
    Eigen::MatrixXd x_mat(solved.rows(), static_cast<Eigen::Index>(roles.covariates.size()));
    for (std::size_t j = 0; j < roles.covariates.size(); ++j) {
      x_mat.col(static_cast<Eigen::Index>(j)) = solved.col(model.var_index(roles.covariates[j]));
    }
    const int y_col = model.var_index(y);
    if (engine == Engine::ExactDiscrete) {
      double m_mass = 0.0, acc = 0.0;
      for (Eigen::Index i = 0; i < mass.size(); ++i) {
        if ((x_mat.row(i).transpose() - x).cwiseAbs().maxCoeff() > 1e-9) continue;
        m_mass += mass(i);
        acc += mass(i) * solved(i, y_col);
      }
      if (m_mass <= 0.0) throw EmptyAcceptance("X_{T=t}=x has zero probability");
      level_mean[t] = acc / m_mass;
    } else {
      const auto window = adaptive_window(x_mat, x, budget.bandwidth_factor, [](const auto& rows) {
        return static_cast<long>(rows.size()) >= 16;
      });
      if (window.empty()) throw EmptyAcceptance("kernel window empty in the intervened model");
      std::vector<double> vals;
      for (long i : window) vals.push_back(solved(i, y_col));
      const MeanSe m = mean_se(vals);
      level_mean[t] = m.mean;
      level_se[t] = m.se;
    }
  }
  report.value = level_mean[1] - level_mean[0];
  if (engine == Engine::MonteCarlo) {
    report.standard_error = std::sqrt(level_se[0] * level_se[0] + level_se[1] * level_se[1]);
  }
  return report;
}

Law theorem1_law(const ScmModel& model, int t, Engine engine, const McBudget& budget) {
  const auto flags = check_assumptions(model);
  if (!flags.outcome_a5 || !flags.indep_noises_a6) {
    std::cerr << "[cfl] warning: theorem1_law on a model violating the outcome/noise "
                 "assumptions; the identified law need not match\n";
  }
  const ScmModel modified = outcome_equation_intervention(model, static_cast<double>(t));
  const auto& roles = model.roles();
  std::vector<std::string> query;
  query.push_back(roles.treatment);
  for (const auto& x : roles.covariates) query.push_back(x);
  for (const auto& y : roles.outcomes) query.push_back(y);

  std::vector<std::string> dims;
  dims.push_back(roles.treatment);
  for (const auto& x : roles.covariates) dims.push_back(x);
  for (const auto& y : roles.outcomes) dims.push_back(y + "_" + std::to_string(t));

  if (engine == Engine::ExactDiscrete) {
    const AtomTable atoms = enumerate_noise(model.noise());
    const Eigen::MatrixXd solved = solve_on(modified, atoms.coords);
    Eigen::MatrixXd coords(solved.rows(), static_cast<Eigen::Index>(query.size()));
    for (std::size_t j = 0; j < query.size(); ++j) {
      coords.col(static_cast<Eigen::Index>(j)) = solved.col(modified.var_index(query[j]));
    }
    return Law::exact_table(std::move(dims), std::move(coords), atoms.probs);
  }
  if (engine == Engine::LinearGaussian) {
    const auto rep = mixture_rep(modified);
    if (!rep) throw EngineInapplicable("modified model outside the linear-gaussian subclass");
    Law law = rep->marginal_law(query);
    return Law::gaussian_mixture(dims, law.mixture().components);
  }
  const NoiseBatch batch = sample_noise(model.noise(), budget.seed, budget.n);
  const Eigen::MatrixXd solved = solve_on(modified, batch.values);
  Eigen::MatrixXd sample(solved.rows(), static_cast<Eigen::Index>(query.size()));
  for (std::size_t j = 0; j < query.size(); ++j) {
    sample.col(static_cast<Eigen::Index>(j)) = solved.col(modified.var_index(query[j]));
  }
  return Law::empirical(std::move(dims), std::move(sample), budget.seed,
                        "theorem1(t=" + std::to_string(t) + ")");
}

EstimandReport relaxed_noise_cate_gap(const ScmModel& model, const Eigen::VectorXd& x,
                                      Engine engine, const McBudget& budget) {
  return gap_impl(model, x, engine, budget);
}

EstimandReport ate(const Law& y1_law, const Law& y0_law) {
  if (y1_law.dimension() != y0_law.dimension()) {
    throw DimensionMismatch("potential-outcome laws have different dimensions");
  }
  if (y1_law.dimension() != 1) {
    throw DimensionMismatch("ate is defined for scalar outcome laws");
  }
  EstimandReport report;
  report.name = "ate";
  report.engine = Engine::LinearGaussian;
  report.value = y1_law.mean()(0) - y0_law.mean()(0);
  return report;
}

}  // namespace cfl
