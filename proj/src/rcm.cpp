#include "cfl/rcm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

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

std::string do_suffix(int t) { return "@do" + std::to_string(t); }
std::string oe_suffix(int t) { return "@oe" + std::to_string(t); }

int level_of(double t, const std::vector<int>& support) {
  for (int lvl : support) {
    if (static_cast<double>(lvl) == t) return lvl;
  }
  throw ValidationError("treatment value " + fmt(t) + " outside support");
}

}  // namespace

// ---------------------------------------------------------------------------
// FunctionalRcm

FunctionalRcm::FunctionalRcm(ScmModel program, std::string t_col, std::vector<std::string> x_cols,
                             std::vector<std::string> y_cols,
                             std::vector<std::vector<std::string>> po_cols,
                             std::vector<int> support, RcmProvenance prov)
    : program_(std::move(program)),
      t_col_(std::move(t_col)),
      x_cols_(std::move(x_cols)),
      y_cols_(std::move(y_cols)),
      po_cols_(std::move(po_cols)),
      support_(std::move(support)),
      provenance_(prov) {
  d_ = static_cast<int>(x_cols_.size());
  p_ = static_cast<int>(po_cols_.empty() ? 0 : po_cols_.front().size());

  // Every treatment level must carry positive probability: exactly on
  // enumerable spaces, on a fixed-seed sample otherwise.
  bool finite = true;
  for (const auto& s : program_.noise().specs()) finite = finite && s.finite_support();
  Eigen::MatrixXd noise_values;
  Eigen::VectorXd mass;
  if (finite) {
    const AtomTable atoms = enumerate_noise(program_.noise());
    noise_values = atoms.coords;
    mass = atoms.probs;
  } else {
    noise_values = sample_noise(program_.noise(), 0x7c7c7cull, 4096).values;
    mass = Eigen::VectorXd::Ones(noise_values.rows());
  }
  const Eigen::VectorXd t_vals =
      solve_on(program_, noise_values).col(program_.var_index(t_col_));
  for (int lvl : support_) {
    double level_mass = 0.0;
    for (Eigen::Index i = 0; i < t_vals.size(); ++i) {
      if (t_vals(i) == static_cast<double>(lvl)) level_mass += mass(i);
    }
    if (level_mass <= 0.0) {
      throw ValidationError("treatment level " + std::to_string(lvl) +
                            " has zero probability");
    }
  }
}

const NoiseSpace& FunctionalRcm::noise() const { return program_.noise(); }

FunctionalRcm FunctionalRcm::entailed(const ScmModel& model) {
  const auto& roles = model.roles();
  if (roles.treatment.empty()) throw ValidationError("entailed RCM needs a designated treatment");
  if (roles.outcomes.empty()) throw ValidationError("entailed RCM needs designated outcomes");

  std::vector<std::pair<std::string, Expression>> eqs;
  for (const auto& v : model.variables()) eqs.emplace_back(v, model.equation(v));

  // One coupled copy of the whole system per treatment level, sharing the
  // noise space: do(T=t) applied to the copy.
  std::vector<std::vector<std::string>> po_cols;
  for (int t : roles.treatment_support) {
    std::map<std::string, std::string> renames;
    for (const auto& v : model.variables()) renames[v] = v + do_suffix(t);
    for (const auto& v : model.variables()) {
      if (v == roles.treatment) {
        eqs.emplace_back(renames[v], Expression::constant(static_cast<double>(t)));
      } else {
        eqs.emplace_back(renames[v], model.equation(v).rename_refs(renames));
      }
    }
    std::vector<std::string> ys;
    for (const auto& y : roles.outcomes) ys.push_back(renames[y]);
    po_cols.push_back(std::move(ys));
  }
  ScmModel program(std::move(eqs), model.noise(), roles);
  return FunctionalRcm(std::move(program), roles.treatment, roles.covariates, roles.outcomes,
                       std::move(po_cols), roles.treatment_support, RcmProvenance::Entailed);
}

FunctionalRcm FunctionalRcm::outcome_equation(const ScmModel& model) {
  const auto& roles = model.roles();
  if (roles.treatment.empty()) throw ValidationError("needs a designated treatment");
  if (roles.outcomes.empty()) throw ValidationError("needs designated outcomes");

  std::vector<std::pair<std::string, Expression>> eqs;
  for (const auto& v : model.variables()) eqs.emplace_back(v, model.equation(v));

  // Y_t := f_Y(t, X, U_Y): T fixed to t inside outcome equations only.
  std::vector<std::vector<std::string>> po_cols;
  for (int t : roles.treatment_support) {
    std::map<std::string, std::string> renames;
    for (const auto& y : roles.outcomes) renames[y] = y + oe_suffix(t);
    std::vector<std::string> ys;
    for (const auto& y : roles.outcomes) {
      Expression eq = model.equation(y)
                          .substitute(roles.treatment, static_cast<double>(t))
                          .rename_refs(renames);
      eqs.emplace_back(renames[y], std::move(eq));
      ys.push_back(renames[y]);
    }
    po_cols.push_back(std::move(ys));
  }
  ScmModel program(std::move(eqs), model.noise(), roles);
  return FunctionalRcm(std::move(program), roles.treatment, roles.covariates, roles.outcomes,
                       std::move(po_cols), roles.treatment_support, RcmProvenance::OutcomeEquation);
}

FunctionalRcm FunctionalRcm::user(const ScmModel& base,
                                  const std::vector<std::vector<Expression>>& po_exprs) {
  const auto& roles = base.roles();
  if (roles.treatment.empty()) throw ValidationError("user RCM needs a designated treatment");
  if (po_exprs.size() != roles.treatment_support.size()) {
    throw ValidationError("need one potential-outcome block per treatment level");
  }
  const std::size_t p = roles.outcomes.empty() ? po_exprs.front().size() : roles.outcomes.size();
  std::vector<std::pair<std::string, Expression>> eqs;
  for (const auto& v : base.variables()) eqs.emplace_back(v, base.equation(v));
  std::vector<std::vector<std::string>> po_cols;
  for (std::size_t t = 0; t < po_exprs.size(); ++t) {
    if (po_exprs[t].size() != p) {
      throw ValidationError("potential-outcome dimension differs across levels");
    }
    std::vector<std::string> names;
    for (std::size_t i = 0; i < p; ++i) {
      std::string name = "Y" + std::to_string(t) + (p > 1 ? "_" + std::to_string(i) : "");
      if (base.var_index(name) >= 0) name = "__po" + std::to_string(t) + "_" + std::to_string(i);
      eqs.emplace_back(name, po_exprs[t][i]);
      names.push_back(std::move(name));
    }
    po_cols.push_back(std::move(names));
  }
  ScmModel program(std::move(eqs), base.noise(), roles);
  return FunctionalRcm(std::move(program), roles.treatment, roles.covariates, roles.outcomes,
                       std::move(po_cols), roles.treatment_support, RcmProvenance::UserDefined);
}

FunctionalRcm FunctionalRcm::from_components(NoiseSpace noise, Expression t_expr,
                                             std::vector<std::pair<std::string, Expression>> x_exprs,
                                             std::vector<std::vector<Expression>> po_exprs,
                                             std::vector<int> treatment_support) {
  std::vector<std::pair<std::string, Expression>> eqs;
  eqs.emplace_back("T", std::move(t_expr));
  std::vector<std::string> x_names;
  for (auto& [name, eq] : x_exprs) {
    x_names.push_back(name);
    eqs.emplace_back(name, std::move(eq));
  }
  std::vector<std::vector<std::string>> po_cols;
  const std::size_t p = po_exprs.empty() ? 0 : po_exprs.front().size();
  for (std::size_t t = 0; t < po_exprs.size(); ++t) {
    if (po_exprs[t].size() != p) {
      throw ValidationError("potential-outcome dimension differs across levels");
    }
    std::vector<std::string> names;
    for (std::size_t i = 0; i < p; ++i) {
      std::string name = "Y" + std::to_string(t) + (p > 1 ? "_" + std::to_string(i) : "");
      eqs.emplace_back(name, po_exprs[t][i]);
      names.push_back(std::move(name));
    }
    po_cols.push_back(std::move(names));
  }
  ModelRoles roles;
  roles.treatment = "T";
  roles.covariates = x_names;
  roles.treatment_support = treatment_support;
  ScmModel program(std::move(eqs), std::move(noise), std::move(roles));
  // Observational Y is recovered from the consistency rule.
  return FunctionalRcm(std::move(program), "T", std::move(x_names), {}, std::move(po_cols),
                       std::move(treatment_support), RcmProvenance::UserDefined);
}

RcmBatch FunctionalRcm::generate(const Eigen::MatrixXd& noise_values) const {
  const Eigen::MatrixXd solved = solve_on(program_, noise_values);
  const long n = solved.rows();
  RcmBatch out;
  out.t = solved.col(program_.var_index(t_col_));
  out.x.resize(n, d_);
  for (int j = 0; j < d_; ++j) {
    out.x.col(j) = solved.col(program_.var_index(x_cols_[static_cast<std::size_t>(j)]));
  }
  out.y_t.reserve(support_.size());
  for (std::size_t t = 0; t < support_.size(); ++t) {
    Eigen::MatrixXd yt(n, p_);
    for (int i = 0; i < p_; ++i) {
      yt.col(i) = solved.col(program_.var_index(po_cols_[t][static_cast<std::size_t>(i)]));
    }
    out.y_t.push_back(std::move(yt));
  }
  out.y.resize(n, p_);
  if (!y_cols_.empty()) {
    for (int i = 0; i < p_; ++i) {
      out.y.col(i) = solved.col(program_.var_index(y_cols_[static_cast<std::size_t>(i)]));
    }
  } else {
    for (long r = 0; r < n; ++r) {
      const int lvl = level_of(out.t(r), support_);
      out.y.row(r) = out.y_t[static_cast<std::size_t>(lvl)].row(r);
    }
  }
  return out;
}

FunctionalRcm entailed_rcm(const ScmModel& model) { return FunctionalRcm::entailed(model); }

FunctionalRcm user_rcm(const ScmModel& base, const std::vector<std::vector<Expression>>& po_exprs) {
  return FunctionalRcm::user(base, po_exprs);
}

// ---------------------------------------------------------------------------
// ObservationalView

ObservationalView::ObservationalView(const ScmModel& model) : program_(model) {
  const auto& roles = model.roles();
  if (roles.treatment.empty() || roles.outcomes.empty()) {
    throw ValidationError("observational view needs designated T and Y roles");
  }
  t_col_ = roles.treatment;
  x_cols_ = roles.covariates;
  y_cols_ = roles.outcomes;
  support_ = roles.treatment_support;
}

ObservationalView::ObservationalView(const FunctionalRcm& rcm)
    : program_(rcm.program()),
      t_col_(rcm.t_column()),
      x_cols_(rcm.x_columns()),
      y_cols_(rcm.y_columns()),
      support_(rcm.treatment_support()) {
  if (y_cols_.empty()) rcm_ = rcm;  // Y recovered through consistency
}

ObservationalView::Sample ObservationalView::sample(std::uint64_t seed, long n) const {
  const NoiseBatch batch = sample_noise(noise(), seed, n);
  Sample s;
  if (rcm_) {
    const RcmBatch rb = rcm_->generate(batch.values);
    s.t = rb.t;
    s.x = rb.x;
    s.y = rb.y;
    return s;
  }
  const Eigen::MatrixXd solved = solve_on(program_, batch.values);
  s.t = solved.col(program_.var_index(t_col_));
  s.x.resize(n, static_cast<Eigen::Index>(x_cols_.size()));
  for (std::size_t j = 0; j < x_cols_.size(); ++j) {
    s.x.col(static_cast<Eigen::Index>(j)) = solved.col(program_.var_index(x_cols_[j]));
  }
  s.y.resize(n, static_cast<Eigen::Index>(y_cols_.size()));
  for (std::size_t j = 0; j < y_cols_.size(); ++j) {
    s.y.col(static_cast<Eigen::Index>(j)) = solved.col(program_.var_index(y_cols_[j]));
  }
  return s;
}

bool ObservationalView::enumerable() const {
  for (const auto& spec : noise().specs()) {
    if (!spec.finite_support()) return false;
  }
  return true;
}

Law ObservationalView::exact_joint() const {
  const AtomTable atoms = enumerate_noise(noise());
  std::vector<std::string> dims;
  dims.push_back(t_col_);
  for (const auto& x : x_cols_) dims.push_back(x);
  const int p = rcm_ ? rcm_->outcome_dim() : static_cast<int>(y_cols_.size());
  for (int i = 0; i < p; ++i) {
    dims.push_back(y_cols_.empty() ? "Y" + std::to_string(i) : y_cols_[static_cast<std::size_t>(i)]);
  }
  Eigen::MatrixXd coords(atoms.coords.rows(), static_cast<Eigen::Index>(dims.size()));
  if (rcm_) {
    const RcmBatch rb = rcm_->generate(atoms.coords);
    coords.col(0) = rb.t;
    for (int j = 0; j < rb.x.cols(); ++j) coords.col(1 + j) = rb.x.col(j);
    for (int j = 0; j < rb.y.cols(); ++j) coords.col(1 + rb.x.cols() + j) = rb.y.col(j);
  } else {
    const Eigen::MatrixXd solved = solve_on(program_, atoms.coords);
    coords.col(0) = solved.col(program_.var_index(t_col_));
    for (std::size_t j = 0; j < x_cols_.size(); ++j) {
      coords.col(1 + static_cast<Eigen::Index>(j)) = solved.col(program_.var_index(x_cols_[j]));
    }
    for (std::size_t j = 0; j < y_cols_.size(); ++j) {
      coords.col(1 + static_cast<Eigen::Index>(x_cols_.size() + j)) =
          solved.col(program_.var_index(y_cols_[j]));
    }
  }
  return Law::exact_table(std::move(dims), std::move(coords), atoms.probs);
}

// ---------------------------------------------------------------------------
// check_consistency

CheckReport check_consistency(const FunctionalRcm& rcm, const McBudget& budget, Engine engine) {
  CheckReport report;
  report.threshold = 0.0;
  bool exact = engine == Engine::ExactDiscrete;
  Eigen::MatrixXd noise_values;
  Eigen::VectorXd mass;
  if (exact) {
    AtomTable atoms;
    try {
      atoms = enumerate_noise(rcm.noise());
    } catch (const NotEnumerable& e) {
      throw EngineInapplicable(std::string("exact consistency check: ") + e.what());
    }
    noise_values = atoms.coords;
    mass = atoms.probs;
    report.method = Engine::ExactDiscrete;
  } else {
    noise_values = sample_noise(rcm.noise(), budget.seed, budget.n).values;
    mass = Eigen::VectorXd::Ones(budget.n);
    report.method = Engine::MonteCarlo;
  }
  const RcmBatch rb = rcm.generate(noise_values);
  double worst = 0.0;
  long worst_row = -1;
  for (long i = 0; i < rb.t.size(); ++i) {
    if (mass(i) <= 0.0) continue;
    const int lvl = level_of(rb.t(i), rcm.treatment_support());
    const double dev =
        (rb.y.row(i) - rb.y_t[static_cast<std::size_t>(lvl)].row(i)).cwiseAbs().maxCoeff();
    if (dev > worst) {
      worst = dev;
      worst_row = i;
    }
  }
  report.statistic = worst;
  report.holds = worst <= report.threshold;
  if (!report.holds && worst_row >= 0) {
    const int lvl = level_of(rb.t(worst_row), rcm.treatment_support());
    report.witnesses.push_back("draw " + std::to_string(worst_row) + ": T=" + fmt(rb.t(worst_row)) +
                               ", Y=" + fmt(rb.y(worst_row, 0)) + ", Y_" + std::to_string(lvl) +
                               "=" + fmt(rb.y_t[static_cast<std::size_t>(lvl)](worst_row, 0)));
  }
  return report;
}

// ---------------------------------------------------------------------------
// check_positivity / propensity

namespace {

// Groups rows of a matrix by exact coordinate equality; returns group index
// per row.
std::vector<int> group_rows(const Eigen::MatrixXd& coords, std::vector<Eigen::VectorXd>* reps) {
  std::vector<int> group(static_cast<std::size_t>(coords.rows()), -1);
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    for (std::size_t g = 0; g < reps->size(); ++g) {
      if (((*reps)[g] - coords.row(i).transpose()).cwiseAbs().maxCoeff() <= 1e-12) {
        group[static_cast<std::size_t>(i)] = static_cast<int>(g);
        break;
      }
    }
    if (group[static_cast<std::size_t>(i)] < 0) {
      reps->push_back(coords.row(i).transpose());
      group[static_cast<std::size_t>(i)] = static_cast<int>(reps->size()) - 1;
    }
  }
  return group;
}

CheckReport positivity_exact(const ObservationalView& obs) {
  CheckReport report;
  report.method = Engine::ExactDiscrete;
  report.threshold = 0.0;
  const Law joint = obs.exact_joint();
  const auto& table = joint.table();
  const int d = static_cast<int>(obs.x_columns().size());
  Eigen::MatrixXd x_coords = table.coords.middleCols(1, d);
  std::vector<Eigen::VectorXd> reps;
  const std::vector<int> group = group_rows(x_coords, &reps);
  const std::size_t n_groups = reps.size();
  std::vector<double> group_mass(n_groups, 0.0);
  std::vector<std::map<int, double>> t_mass(n_groups);
  for (Eigen::Index i = 0; i < table.coords.rows(); ++i) {
    const int g = group[static_cast<std::size_t>(i)];
    group_mass[static_cast<std::size_t>(g)] += table.probs(i);
    t_mass[static_cast<std::size_t>(g)][static_cast<int>(table.coords(i, 0))] += table.probs(i);
  }
  double violating = 0.0;
  for (std::size_t g = 0; g < n_groups; ++g) {
    if (group_mass[g] <= 0.0) continue;
    for (int t : obs.treatment_support()) {
      auto it = t_mass[g].find(t);
      const double m = it == t_mass[g].end() ? 0.0 : it->second;
      if (m <= 0.0) {
        violating += group_mass[g];
        report.witnesses.push_back("x-stratum " + std::to_string(g) + " has P(T=" +
                                   std::to_string(t) + "|x)=0");
        break;
      }
    }
  }
  report.statistic = violating;
  report.holds = violating <= 0.0;
  return report;
}

// Exogenous noises feeding a variable through any path.
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

CheckReport positivity_gaussian(const ObservationalView& obs) {
  CheckReport report;
  report.method = Engine::LinearGaussian;
  report.threshold = 0.0;
  const ScmModel& model = obs.program();
  const auto rep = mixture_rep(model);
  const std::string& t_col = obs.t_column();

  if (rep) {
    // Per-component-constant treatment: the propensity is a density ratio of
    // the component mixture.
    bool t_constant = true;
    for (const auto& comp : rep->components) {
      if (!comp.vars[static_cast<std::size_t>(rep->var_index(t_col))].noise_coef.empty()) {
        t_constant = false;
      }
    }
    if (t_constant) {
      // X marginals: all nondegenerate Gaussians share full support; all
      // degenerate point masses reduce to the exact table case.
      const auto& x_cols = obs.x_columns();
      bool all_nondegenerate = true, all_point = true;
      for (const auto& comp : rep->components) {
        if (comp.prob <= 0.0) continue;
        double min_var = std::numeric_limits<double>::infinity();
        double max_var = 0.0;
        for (const auto& x : x_cols) {
          const auto& f = comp.vars[static_cast<std::size_t>(rep->var_index(x))];
          double v = 0.0;
          for (const auto& [u, coef] : f.noise_coef) {
            v += coef * coef * rep->cont_var(rep->cont_index(u));
          }
          min_var = std::min(min_var, v);
          max_var = std::max(max_var, v);
        }
        if (x_cols.empty()) min_var = max_var = 0.0;
        if (min_var <= 0.0 && !x_cols.empty()) all_nondegenerate = false;
        if (max_var > 0.0) all_point = false;
      }
      if (all_nondegenerate || x_cols.empty()) {
        double missing_mass = 0.0;
        for (int t : obs.treatment_support()) {
          double mass_t = 0.0;
          for (const auto& comp : rep->components) {
            const auto& f = comp.vars[static_cast<std::size_t>(rep->var_index(t_col))];
            if (f.c == static_cast<double>(t)) mass_t += comp.prob;
          }
          if (mass_t <= 0.0) {
            missing_mass = 1.0;
            report.witnesses.push_back("treatment level " + std::to_string(t) +
                                       " has probability 0");
          }
        }
        report.statistic = missing_mass;
        report.holds = missing_mass <= 0.0;
        return report;
      }
      if (all_point) return positivity_exact(obs);
      throw EngineInapplicable("mixed degenerate/nondegenerate covariate components");
    }

    // Fall through: treatment varies with continuous noises inside the
    // affine subclass, which cannot happen for a discrete treatment.
    throw EngineInapplicable("treatment is not constant per mixture component");
  }

  // Indicator treatment: T = 1{arg > 0}. Positivity holds when, given X, the
  // argument keeps a nondegenerate Gaussian part.
  const Expression& t_eq = model.equation(t_col);
  const auto& root = t_eq.nodes()[static_cast<std::size_t>(t_eq.root())];
  if (root.kind == Expression::Kind::Indicator) {
    // Affine view of the argument after full substitution through parents.
    std::function<std::optional<AffineForm>(const std::string&)> resolve =
        [&](const std::string& name) -> std::optional<AffineForm> {
      if (model.is_variable(name)) {
        return to_affine(model.equation(name), resolve);
      }
      if (model.noise().has(name)) {
        AffineForm f;
        f.noise_coef[name] = 1.0;
        return f;
      }
      return std::nullopt;
    };
    // The argument is the subtree at root.a; fold it with the same rules as
    // to_affine, resolving variables through their own equations.
    std::function<std::optional<AffineForm>(int)> go = [&](int i) -> std::optional<AffineForm> {
      const auto& n = t_eq.nodes()[static_cast<std::size_t>(i)];
      switch (n.kind) {
        case Expression::Kind::Constant:
          return AffineForm{n.value, {}, {}};
        case Expression::Kind::Ref:
          return resolve(n.name);
        case Expression::Kind::Add: {
          auto a = go(n.a), b = go(n.b);
          if (!a || !b) return std::nullopt;
          *a += *b;
          return a;
        }
        case Expression::Kind::Mul: {
          auto a = go(n.a), b = go(n.b);
          if (!a || !b) return std::nullopt;
          if (b->is_constant()) {
            *a *= b->c;
            return a;
          }
          if (a->is_constant()) {
            *b *= a->c;
            return b;
          }
          return std::nullopt;
        }
        case Expression::Kind::Neg: {
          auto a = go(n.a);
          if (!a) return std::nullopt;
          *a *= -1.0;
          return a;
        }
        default:
          return std::nullopt;
      }
    };
    const auto arg = go(root.a);
    if (arg) {
      // Given T's value, the covariate equations constrain only the noises
      // reachable without passing through T; walk the closure on the model
      // with T pinned so those paths are cut.
      const ScmModel pinned =
          model.with_equation(t_col, Expression::constant(
                                         static_cast<double>(obs.treatment_support().front())));
      const auto x_noises = noise_closure(pinned, obs.x_columns());
      bool private_noise = false;
      for (const auto& [u, coef] : arg->noise_coef) {
        if (coef == 0.0) continue;
        const int ui = model.noise().index_of(u);
        if (ui < 0) continue;
        if (model.noise().spec(static_cast<std::size_t>(ui)).variance() > 0.0 &&
            !x_noises.count(u)) {
          private_noise = true;
        }
      }
      if (private_noise) {
        report.statistic = 0.0;
        report.holds = true;
        return report;
      }
      // Argument driven entirely by covariates and their noises: the
      // propensity is degenerate.
      report.statistic = 1.0;
      report.holds = false;
      report.witnesses.push_back("treatment is a deterministic function of the covariates");
      return report;
    }
  }
  throw EngineInapplicable("treatment equation outside the analytic positivity patterns");
}

CheckReport positivity_mc(const ObservationalView& obs, const McBudget& budget) {
  CheckReport report;
  report.method = Engine::MonteCarlo;
  report.threshold = 0.0;
  const double eps = 1e-3;
  const auto s = obs.sample(budget.seed, budget.n);
  const int d = static_cast<int>(s.x.cols());
  const int k = std::max(1, static_cast<int>(std::ceil(std::cbrt(static_cast<double>(budget.n)))));
  const int k_per_coord = d == 0 ? 1 : std::max(1, static_cast<int>(std::round(std::pow(k, 1.0 / d))));
  std::vector<int> cell(static_cast<std::size_t>(budget.n), 0);
  if (d > 0) {
    int stride = 1;
    for (int j = 0; j < d; ++j) {
      const auto bins = equal_mass_bins(s.x.col(j), k_per_coord);
      for (long i = 0; i < budget.n; ++i) cell[static_cast<std::size_t>(i)] += stride * bins[static_cast<std::size_t>(i)];
      stride *= k_per_coord;
    }
  }
  std::map<int, std::map<int, long>> counts;
  std::map<int, long> totals;
  for (long i = 0; i < budget.n; ++i) {
    const int lvl = level_of(s.t(i), obs.treatment_support());
    ++counts[cell[static_cast<std::size_t>(i)]][lvl];
    ++totals[cell[static_cast<std::size_t>(i)]];
  }
  long violating = 0;
  double min_prop = 1.0;
  for (const auto& [c, total] : totals) {
    for (int t : obs.treatment_support()) {
      auto it = counts[c].find(t);
      const double prop = it == counts[c].end() ? 0.0 : static_cast<double>(it->second) / total;
      min_prop = std::min(min_prop, prop);
      if (prop < eps) {
        ++violating;
        if (report.witnesses.size() < 8) {
          report.witnesses.push_back("bin " + std::to_string(c) + ": propensity of T=" +
                                     std::to_string(t) + " is " + fmt(prop));
        }
        break;
      }
    }
  }
  report.statistic = static_cast<double>(violating) / static_cast<double>(totals.size());
  report.holds = violating == 0;
  report.warnings.push_back("min empirical propensity " + fmt(min_prop) + " over " +
                            std::to_string(totals.size()) + " bins (threshold " + fmt(eps) + ")");
  return report;
}

}  // namespace

CheckReport check_positivity(const ObservationalView& obs, Engine engine, const McBudget& budget) {
  switch (engine) {
    case Engine::ExactDiscrete:
      if (!obs.enumerable()) throw EngineInapplicable("exact positivity needs a finite space");
      return positivity_exact(obs);
    case Engine::LinearGaussian:
      return positivity_gaussian(obs);
    case Engine::MonteCarlo:
      return positivity_mc(obs, budget);
  }
  throw EngineInapplicable("unknown engine");
}

double propensity(const ObservationalView& obs, int t, const Eigen::VectorXd& x, Engine engine) {
  if (engine == Engine::ExactDiscrete) {
    const Law joint = obs.exact_joint();
    const auto& table = joint.table();
    const int d = static_cast<int>(obs.x_columns().size());
    double mass_x = 0.0, mass_xt = 0.0;
    for (Eigen::Index i = 0; i < table.coords.rows(); ++i) {
      if ((table.coords.row(i).segment(1, d).transpose() - x).cwiseAbs().maxCoeff() > 1e-9) continue;
      mass_x += table.probs(i);
      if (table.coords(i, 0) == static_cast<double>(t)) mass_xt += table.probs(i);
    }
    if (mass_x <= 0.0) throw ZeroProbabilityEvidence("x outside the covariate support");
    return mass_xt / mass_x;
  }
  if (engine == Engine::LinearGaussian) {
    const auto rep = mixture_rep(obs.program());
    if (!rep) throw EngineInapplicable("model outside the linear-gaussian subclass");
    std::vector<std::pair<std::string, double>> ev;
    for (std::size_t j = 0; j < obs.x_columns().size(); ++j) {
      ev.emplace_back(obs.x_columns()[j], x(static_cast<Eigen::Index>(j)));
    }
    const Posterior post = condition_mixture(*rep, ev);
    const int ti = rep->var_index(obs.t_column());
    double p = 0.0;
    for (const auto& pc : post.components) {
      const auto& f = rep->components[pc.component].vars[static_cast<std::size_t>(ti)];
      if (!f.noise_coef.empty()) {
        throw EngineInapplicable("treatment is not constant per component");
      }
      if (f.c == static_cast<double>(t)) p += pc.weight;
    }
    return p;
  }
  throw EngineInapplicable("propensity needs the exact or gaussian engine");
}

// ---------------------------------------------------------------------------
// check_ignorability

namespace {

// Total variation between two conditional finite laws given as rows+masses.
double conditional_tv(const Eigen::MatrixXd& coords_a, const Eigen::VectorXd& mass_a,
                      const Eigen::MatrixXd& coords_b, const Eigen::VectorXd& mass_b) {
  const Law la = Law::exact_table(
      std::vector<std::string>(static_cast<std::size_t>(coords_a.cols()), "y"), coords_a,
      mass_a / mass_a.sum());
  const Law lb = Law::exact_table(
      std::vector<std::string>(static_cast<std::size_t>(coords_b.cols()), "y"), coords_b,
      mass_b / mass_b.sum());
  return law_distance(la, lb).statistic;
}

CheckReport ignorability_exact(const FunctionalRcm& rcm, IgnorabilityMode mode) {
  CheckReport report;
  report.method = Engine::ExactDiscrete;
  report.threshold = 1e-12;
  AtomTable atoms;
  try {
    atoms = enumerate_noise(rcm.noise());
  } catch (const NotEnumerable& e) {
    throw EngineInapplicable(std::string("exact ignorability: ") + e.what());
  }
  const RcmBatch rb = rcm.generate(atoms.coords);
  const int p = rcm.outcome_dim();
  const std::size_t n_levels = rcm.treatment_support().size();

  // Outcome blocks to compare: the joint PO vector (cross) or each Y_t
  // separately (single).
  std::vector<std::vector<std::pair<int, int>>> blocks;  // (level, dim) selections
  if (mode == IgnorabilityMode::Cross) {
    std::vector<std::pair<int, int>> all;
    for (std::size_t t = 0; t < n_levels; ++t) {
      for (int i = 0; i < p; ++i) all.emplace_back(static_cast<int>(t), i);
    }
    blocks.push_back(std::move(all));
  } else {
    for (std::size_t t = 0; t < n_levels; ++t) {
      std::vector<std::pair<int, int>> one;
      for (int i = 0; i < p; ++i) one.emplace_back(static_cast<int>(t), i);
      blocks.push_back(std::move(one));
    }
  }

  std::vector<Eigen::VectorXd> x_reps;
  const std::vector<int> x_group = group_rows(rb.x, &x_reps);
  double worst = 0.0;
  for (std::size_t g = 0; g < x_reps.size(); ++g) {
    for (const auto& block : blocks) {
      // Gather per-treatment-stratum sub-tables of the block values.
      std::vector<Eigen::MatrixXd> coords(n_levels);
      std::vector<Eigen::VectorXd> masses(n_levels);
      for (std::size_t lvl = 0; lvl < n_levels; ++lvl) {
        std::vector<long> rows;
        for (long i = 0; i < rb.t.size(); ++i) {
          if (x_group[static_cast<std::size_t>(i)] != static_cast<int>(g)) continue;
          if (atoms.probs(i) <= 0.0) continue;
          if (level_of(rb.t(i), rcm.treatment_support()) != static_cast<int>(lvl)) continue;
          rows.push_back(i);
        }
        coords[lvl].resize(static_cast<Eigen::Index>(rows.size()),
                           static_cast<Eigen::Index>(block.size()));
        masses[lvl].resize(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
          masses[lvl](static_cast<Eigen::Index>(r)) = atoms.probs(rows[r]);
          for (std::size_t c = 0; c < block.size(); ++c) {
            coords[lvl](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                rb.y_t[static_cast<std::size_t>(block[c].first)](rows[r], block[c].second);
          }
        }
      }
      for (std::size_t a = 0; a < n_levels; ++a) {
        for (std::size_t b = a + 1; b < n_levels; ++b) {
          if (masses[a].size() == 0 || masses[b].size() == 0) continue;  // empty stratum
          const double tv = conditional_tv(coords[a], masses[a], coords[b], masses[b]);
          if (tv > worst) worst = tv;
          if (tv > report.threshold && report.witnesses.size() < 8) {
            report.witnesses.push_back("x-stratum " + std::to_string(g) + ", T=" +
                                       std::to_string(a) + " vs T=" + std::to_string(b) +
                                       ": TV=" + fmt(tv));
          }
        }
      }
    }
  }
  report.statistic = worst;
  report.holds = worst <= report.threshold;
  return report;
}

// Conditional law of a block of columns given X=x within one mixture
// component: mean = intercept + slope x, plus a residual covariance.
struct ConditionalGaussian {
  double weight = 0.0;
  Eigen::VectorXd intercept;
  Eigen::MatrixXd slope;
  Eigen::MatrixXd resid_cov;
};

bool conditional_close(const ConditionalGaussian& a, const ConditionalGaussian& b, double tol) {
  if (std::abs(a.weight - b.weight) > tol) return false;
  if ((a.intercept - b.intercept).cwiseAbs().maxCoeff() > tol) return false;
  if (a.slope.size() > 0 && (a.slope - b.slope).cwiseAbs().maxCoeff() > tol) return false;
  if ((a.resid_cov - b.resid_cov).cwiseAbs().maxCoeff() > tol) return false;
  return true;
}

// Gaussian conditional of (block | X) inside one component of a MixtureRep.
ConditionalGaussian component_conditional(const MixtureRep& rep, std::size_t comp_idx,
                                          const std::vector<std::string>& block,
                                          const std::vector<std::string>& x_cols) {
  const auto& comp = rep.components[comp_idx];
  const Eigen::Index K = rep.cont_mean.size();
  const int q = static_cast<int>(block.size());
  const int d = static_cast<int>(x_cols.size());
  Eigen::MatrixXd cb(q, K), cx(d, K);
  cb.setZero();
  cx.setZero();
  Eigen::VectorXd mb(q), mx(d);
  for (int a = 0; a < q; ++a) {
    const auto& f = comp.vars[static_cast<std::size_t>(rep.var_index(block[static_cast<std::size_t>(a)]))];
    double m = f.c;
    for (const auto& [u, coef] : f.noise_coef) {
      cb(a, rep.cont_index(u)) = coef;
      m += coef * rep.cont_mean(rep.cont_index(u));
    }
    mb(a) = m;
  }
  for (int a = 0; a < d; ++a) {
    const auto& f = comp.vars[static_cast<std::size_t>(rep.var_index(x_cols[static_cast<std::size_t>(a)]))];
    double m = f.c;
    for (const auto& [u, coef] : f.noise_coef) {
      cx(a, rep.cont_index(u)) = coef;
      m += coef * rep.cont_mean(rep.cont_index(u));
    }
    mx(a) = m;
  }
  const Eigen::MatrixXd S = rep.cont_var.asDiagonal();
  const Eigen::MatrixXd s_bb = cb * S * cb.transpose();
  const Eigen::MatrixXd s_bx = cb * S * cx.transpose();
  const Eigen::MatrixXd s_xx = cx * S * cx.transpose();
  if (d == 0) {
    ConditionalGaussian out;
    out.slope.resize(q, 0);
    out.intercept = mb;
    out.resid_cov = s_bb;
    return out;
  }
  // Pseudo-inverse of s_xx (X may contain point-mass coordinates).
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s_xx);
  Eigen::VectorXd lam = es.eigenvalues();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(lam.size());
  const double lam_max = std::max(1.0, lam.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam(i) > 1e-12 * lam_max) inv(i) = 1.0 / lam(i);
  }
  const Eigen::MatrixXd pinv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  ConditionalGaussian out;
  out.slope = s_bx * pinv;
  out.intercept = mb - out.slope * mx;
  out.resid_cov = s_bb - out.slope * s_bx.transpose();
  return out;
}

CheckReport ignorability_gaussian(const FunctionalRcm& rcm, IgnorabilityMode mode) {
  CheckReport report;
  report.method = Engine::LinearGaussian;
  report.threshold = 1e-9;
  const auto rep = mixture_rep(rcm.program());
  if (!rep) throw EngineInapplicable("model outside the linear-gaussian subclass");
  const std::vector<std::string>& x_cols = rcm.x_columns();
  const int ti = rep->var_index(rcm.t_column());
  const std::size_t n_levels = rcm.treatment_support().size();

  // Strata of components per treatment value; T must be component-constant.
  std::vector<std::vector<std::size_t>> strata(n_levels);
  for (std::size_t c = 0; c < rep->components.size(); ++c) {
    const auto& f = rep->components[c].vars[static_cast<std::size_t>(ti)];
    if (!f.noise_coef.empty()) {
      throw EngineInapplicable("treatment is not constant per mixture component");
    }
    if (rep->components[c].prob <= 0.0) continue;
    strata[static_cast<std::size_t>(level_of(f.c, rcm.treatment_support()))].push_back(c);
  }
  for (std::size_t lvl = 0; lvl < n_levels; ++lvl) {
    if (strata[lvl].empty()) {
      throw EngineInapplicable("treatment level " + std::to_string(lvl) +
                               " has no mixture component");
    }
  }
  // Within a stratum the X marginal must not depend on the component,
  // otherwise the stratum weights would depend on x.
  for (std::size_t lvl = 0; lvl < n_levels; ++lvl) {
    const auto base = component_conditional(*rep, strata[lvl][0], x_cols, {});
    for (std::size_t k = 1; k < strata[lvl].size(); ++k) {
      const auto other = component_conditional(*rep, strata[lvl][k], x_cols, {});
      ConditionalGaussian a = base, b = other;
      a.weight = b.weight = 0.0;
      if (!conditional_close(a, b, 1e-12)) {
        throw EngineInapplicable("covariate law varies inside a treatment stratum");
      }
    }
  }

  std::vector<std::vector<std::string>> blocks;
  if (mode == IgnorabilityMode::Cross) {
    std::vector<std::string> all;
    for (const auto& level_cols : rcm.po_columns()) {
      for (const auto& c : level_cols) all.push_back(c);
    }
    blocks.push_back(std::move(all));
  } else {
    for (const auto& level_cols : rcm.po_columns()) blocks.push_back(level_cols);
  }

  double worst = 0.0;
  for (const auto& block : blocks) {
    // Mixture of conditionals per stratum, weights renormalized.
    std::vector<std::vector<ConditionalGaussian>> laws(n_levels);
    for (std::size_t lvl = 0; lvl < n_levels; ++lvl) {
      double mass = 0.0;
      for (std::size_t c : strata[lvl]) mass += rep->components[c].prob;
      for (std::size_t c : strata[lvl]) {
        ConditionalGaussian g = component_conditional(*rep, c, block, x_cols);
        g.weight = rep->components[c].prob / mass;
        laws[lvl].push_back(std::move(g));
      }
    }
    for (std::size_t a = 0; a < n_levels; ++a) {
      for (std::size_t b = a + 1; b < n_levels; ++b) {
        // Greedy matching of sub-components across the two strata.
        double pair_stat = 0.0;
        if (laws[a].size() != laws[b].size()) {
          pair_stat = 1.0;
        } else {
          std::vector<bool> used(laws[b].size(), false);
          for (const auto& ga : laws[a]) {
            bool matched = false;
            for (std::size_t k = 0; k < laws[b].size(); ++k) {
              if (!used[k] && conditional_close(ga, laws[b][k], report.threshold)) {
                used[k] = true;
                matched = true;
                break;
              }
            }
            if (!matched) pair_stat = 1.0;
          }
        }
        if (pair_stat > worst) worst = pair_stat;
        if (pair_stat > report.threshold && report.witnesses.size() < 8) {
          report.witnesses.push_back("conditional laws differ between T=" + std::to_string(a) +
                                     " and T=" + std::to_string(b));
        }
      }
    }
  }
  report.statistic = worst;
  report.holds = worst <= report.threshold;
  return report;
}

CheckReport ignorability_mc(const FunctionalRcm& rcm, IgnorabilityMode mode,
                            const McBudget& budget) {
  CheckReport report;
  report.method = Engine::MonteCarlo;
  report.threshold = 0.0;
  const long min_stratum = 30;
  // Per-stratum statistic cap: binned conditionals approximate L(.|X=x), and
  // the within-bin covariate drift between strata must stay below the test's
  // resolution. 128 points per side resolves the paper-scale violations
  // (conditional laws differing in shape or location by ~1 sd) but not the
  // O(bin width) nuisance drift.
  const int cap = std::min(budget.max_pairwise, 128);

  const NoiseBatch batch = sample_noise(rcm.noise(), budget.seed, budget.n);
  const RcmBatch rb = rcm.generate(batch.values);
  const int d = static_cast<int>(rb.x.cols());
  const std::size_t n_levels = rcm.treatment_support().size();

  // Equal-mass cells over the covariates, ~8 cells in total.
  const int k_per_coord = d == 0 ? 1 : std::max(2, static_cast<int>(std::round(std::pow(8.0, 1.0 / d))));
  std::vector<int> cell(static_cast<std::size_t>(rb.t.size()), 0);
  int n_cells = 1;
  if (d > 0) {
    int stride = 1;
    for (int j = 0; j < d; ++j) {
      const auto bins = equal_mass_bins(rb.x.col(j), k_per_coord);
      for (long i = 0; i < rb.t.size(); ++i) cell[static_cast<std::size_t>(i)] += stride * bins[static_cast<std::size_t>(i)];
      stride *= k_per_coord;
    }
    n_cells = stride;
  }

  std::vector<std::vector<std::pair<int, int>>> blocks;  // (level, dim)
  const int p = rcm.outcome_dim();
  if (mode == IgnorabilityMode::Cross) {
    std::vector<std::pair<int, int>> all;
    for (std::size_t t = 0; t < n_levels; ++t) {
      for (int i = 0; i < p; ++i) all.emplace_back(static_cast<int>(t), i);
    }
    blocks.push_back(std::move(all));
  } else {
    for (std::size_t t = 0; t < n_levels; ++t) {
      std::vector<std::pair<int, int>> one;
      for (int i = 0; i < p; ++i) one.emplace_back(static_cast<int>(t), i);
      blocks.push_back(std::move(one));
    }
  }

  // Row lists per (cell, treatment level).
  std::vector<std::vector<std::vector<long>>> rows(static_cast<std::size_t>(n_cells),
                                                   std::vector<std::vector<long>>(n_levels));
  for (long i = 0; i < rb.t.size(); ++i) {
    const int lvl = level_of(rb.t(i), rcm.treatment_support());
    rows[static_cast<std::size_t>(cell[static_cast<std::size_t>(i)])][static_cast<std::size_t>(lvl)]
        .push_back(i);
  }

  struct TestCase {
    std::string name;
    double p_value;
  };
  std::vector<TestCase> tests;
  long planned = 0;
  for (int c = 0; c < n_cells; ++c) {
    for (std::size_t a = 0; a < n_levels; ++a) {
      for (std::size_t b = a + 1; b < n_levels; ++b) planned += static_cast<long>(blocks.size());
    }
  }
  // Holm needs attainable per-test p-values below alpha / m.
  const int permutations =
      std::max(budget.permutations,
               static_cast<int>(std::ceil(2.0 * static_cast<double>(std::max<long>(planned, 1)) /
                                          budget.significance)));

  std::uint64_t test_counter = 0;
  for (int c = 0; c < n_cells; ++c) {
    for (std::size_t a = 0; a < n_levels; ++a) {
      for (std::size_t b = a + 1; b < n_levels; ++b) {
        for (std::size_t blk = 0; blk < blocks.size(); ++blk) {
          ++test_counter;
          const auto& ra = rows[static_cast<std::size_t>(c)][a];
          const auto& rbv = rows[static_cast<std::size_t>(c)][b];
          if (static_cast<long>(ra.size()) < min_stratum ||
              static_cast<long>(rbv.size()) < min_stratum) {
            report.warnings.push_back("cell " + std::to_string(c) + " T=" + std::to_string(a) +
                                      "/" + std::to_string(b) +
                                      ": stratum below 30 samples, skipped");
            continue;
          }
          auto extract = [&](const std::vector<long>& idx) {
            Eigen::MatrixXd m(static_cast<Eigen::Index>(idx.size()),
                              static_cast<Eigen::Index>(blocks[blk].size()));
            for (std::size_t r = 0; r < idx.size(); ++r) {
              for (std::size_t cc = 0; cc < blocks[blk].size(); ++cc) {
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cc)) =
                    rb.y_t[static_cast<std::size_t>(blocks[blk][cc].first)](idx[r],
                                                                            blocks[blk][cc].second);
              }
            }
            return m;
          };
          const auto res = energy_permutation_test(extract(ra), extract(rbv), permutations,
                                                   stream_key(budget.seed, test_counter), cap);
          tests.push_back({"cell " + std::to_string(c) + " T" + std::to_string(a) + "/T" +
                               std::to_string(b) + " block " + std::to_string(blk),
                           res.p_value});
        }
      }
    }
  }

  std::vector<double> pvals;
  pvals.reserve(tests.size());
  for (const auto& t : tests) pvals.push_back(t.p_value);
  const auto adjusted = holm_adjust(pvals);
  long rejected = 0;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    if (adjusted[i] < budget.significance) {
      ++rejected;
      if (report.witnesses.size() < 8) {
        report.witnesses.push_back(tests[i].name + ": adjusted p=" + fmt(adjusted[i]));
      }
    }
  }
  report.statistic = static_cast<double>(rejected);
  report.holds = rejected == 0;
  return report;
}

}  // namespace

CheckReport check_ignorability(const FunctionalRcm& rcm, IgnorabilityMode mode, Engine engine,
                               const McBudget& budget) {
  CheckReport report;
  switch (engine) {
    case Engine::ExactDiscrete:
      report = ignorability_exact(rcm, mode);
      break;
    case Engine::LinearGaussian:
      report = ignorability_gaussian(rcm, mode);
      break;
    case Engine::MonteCarlo:
      report = ignorability_mc(rcm, mode, budget);
      break;
  }
  // Positivity is a precondition; surface a warning when it fails.
  try {
    const ObservationalView obs(rcm);
    const CheckReport pos = check_positivity(
        obs, engine == Engine::MonteCarlo ? Engine::MonteCarlo : engine, budget);
    if (!pos.holds) report.warnings.push_back("positivity does not hold on this view");
  } catch (const Error&) {
    report.warnings.push_back("positivity could not be verified with this engine");
  }
  return report;
}

// ---------------------------------------------------------------------------
// identify_single_outcome

namespace {

Law identify_exact(const ObservationalView& obs, int t) {
  const Law joint = obs.exact_joint();
  const auto& table = joint.table();
  const int d = static_cast<int>(obs.x_columns().size());
  const int p = static_cast<int>(table.coords.cols()) - 1 - d;

  // Strata over exact X values.
  Eigen::MatrixXd x_coords = table.coords.middleCols(1, d);
  std::vector<Eigen::VectorXd> reps;
  const std::vector<int> group = group_rows(x_coords, &reps);

  // Conditional law of Y given (X in stratum, T = t).
  struct Target {
    std::vector<long> rows;
    double mass = 0.0;
  };
  std::vector<Target> targets(reps.size());
  for (Eigen::Index i = 0; i < table.coords.rows(); ++i) {
    if (table.coords(i, 0) != static_cast<double>(t)) continue;
    auto& tg = targets[static_cast<std::size_t>(group[static_cast<std::size_t>(i)])];
    tg.rows.push_back(i);
    tg.mass += table.probs(i);
  }

  // Integral formula: sweep (T=t', X=x) cells, attach the target conditional.
  std::vector<Eigen::VectorXd> out_rows;
  std::vector<double> out_probs;
  for (Eigen::Index i = 0; i < table.coords.rows(); ++i) {
    if (table.probs(i) <= 0.0) continue;
    const auto& tg = targets[static_cast<std::size_t>(group[static_cast<std::size_t>(i)])];
    if (tg.mass <= 0.0) {
      throw PositivityViolation("stratum with X=" +
                                std::to_string(group[static_cast<std::size_t>(i)]) +
                                " has no T=" + std::to_string(t) + " mass");
    }
    for (long r : tg.rows) {
      Eigen::VectorXd row(1 + d + p);
      row(0) = table.coords(i, 0);
      row.segment(1, d) = table.coords.row(i).segment(1, d);
      row.segment(1 + d, p) = table.coords.row(r).segment(1 + d, p);
      out_rows.push_back(std::move(row));
      out_probs.push_back(table.probs(i) * table.probs(r) / tg.mass);
    }
  }
  Eigen::MatrixXd coords(static_cast<Eigen::Index>(out_rows.size()), 1 + d + p);
  Eigen::VectorXd probs(static_cast<Eigen::Index>(out_rows.size()));
  for (std::size_t i = 0; i < out_rows.size(); ++i) {
    coords.row(static_cast<Eigen::Index>(i)) = out_rows[i].transpose();
    probs(static_cast<Eigen::Index>(i)) = out_probs[i];
  }
  std::vector<std::string> dims = joint.dims();
  for (int j = 0; j < p; ++j) dims[static_cast<std::size_t>(1 + d + j)] += "_" + std::to_string(t);
  return Law::exact_table(std::move(dims), std::move(coords), std::move(probs));
}

Law identify_gaussian(const ObservationalView& obs, int t) {
  const auto rep = mixture_rep(obs.program());
  if (!rep) throw EngineInapplicable("model outside the linear-gaussian subclass");
  if (obs.y_columns().empty()) {
    throw EngineInapplicable("analytic identification needs explicit outcome equations");
  }
  const auto& x_cols = obs.x_columns();
  const auto& y_cols = obs.y_columns();
  const int d = static_cast<int>(x_cols.size());
  const int p = static_cast<int>(y_cols.size());
  const int ti = rep->var_index(obs.t_column());

  // Components of the T=t stratum carry the conditional law L(Y | X=x, T=t);
  // their X marginals must agree so the stratum mixture weights stay x-free.
  std::vector<std::size_t> stratum;
  double stratum_mass = 0.0;
  for (std::size_t c = 0; c < rep->components.size(); ++c) {
    if (rep->components[c].prob <= 0.0) continue;
    const auto& f = rep->components[c].vars[static_cast<std::size_t>(ti)];
    if (!f.noise_coef.empty()) {
      throw EngineInapplicable("treatment is not constant per mixture component");
    }
    if (f.c == static_cast<double>(t)) {
      stratum.push_back(c);
      stratum_mass += rep->components[c].prob;
    }
  }
  if (stratum.empty()) throw PositivityViolation("no component with T=" + std::to_string(t));
  for (std::size_t k = 1; k < stratum.size(); ++k) {
    auto a = component_conditional(*rep, stratum[0], x_cols, {});
    auto b = component_conditional(*rep, stratum[k], x_cols, {});
    a.weight = b.weight = 0.0;
    if (!conditional_close(a, b, 1e-12)) {
      throw EngineInapplicable("covariate law varies inside the T=" + std::to_string(t) +
                               " stratum");
    }
  }

  std::vector<GaussComponent> comps;
  for (std::size_t b = 0; b < rep->components.size(); ++b) {
    const auto& base = rep->components[b];
    if (base.prob <= 0.0) continue;
    // (T, X) block of the base component.
    Eigen::VectorXd mean_tx(1 + d);
    Eigen::MatrixXd coef_tx(1 + d, rep->cont_mean.size());
    coef_tx.setZero();
    mean_tx(0) = base.vars[static_cast<std::size_t>(ti)].c;
    for (int j = 0; j < d; ++j) {
      const auto& f = base.vars[static_cast<std::size_t>(rep->var_index(x_cols[static_cast<std::size_t>(j)]))];
      double m = f.c;
      for (const auto& [u, coef] : f.noise_coef) {
        coef_tx(1 + j, rep->cont_index(u)) = coef;
        m += coef * rep->cont_mean(rep->cont_index(u));
      }
      mean_tx(1 + j) = m;
    }
    const Eigen::MatrixXd cov_tx =
        coef_tx * rep->cont_var.asDiagonal() * coef_tx.transpose();

    for (std::size_t s : stratum) {
      const ConditionalGaussian cond = component_conditional(*rep, s, y_cols, x_cols);
      GaussComponent g;
      g.label = base.label + "||" + rep->components[s].label;
      g.weight = base.prob * rep->components[s].prob / stratum_mass;
      g.mean.resize(1 + d + p);
      g.mean.head(1 + d) = mean_tx;
      g.mean.tail(p) =
          cond.intercept + cond.slope * mean_tx.segment(1, d);
      g.cov.resize(1 + d + p, 1 + d + p);
      g.cov.setZero();
      g.cov.topLeftCorner(1 + d, 1 + d) = cov_tx;
      const Eigen::MatrixXd cov_x = cov_tx.block(1, 1, d, d);
      const Eigen::MatrixXd cross = cond.slope * cov_x;  // cov(Y_t, X)
      g.cov.block(1 + d, 1, p, d) = cross;
      g.cov.block(1, 1 + d, d, p) = cross.transpose();
      // cov(Y_t, T) = slope * cov(X, T)
      const Eigen::MatrixXd cov_xt = cov_tx.block(1, 0, d, 1);
      g.cov.block(1 + d, 0, p, 1) = cond.slope * cov_xt;
      g.cov.block(0, 1 + d, 1, p) = (cond.slope * cov_xt).transpose();
      g.cov.bottomRightCorner(p, p) = cond.slope * cov_x * cond.slope.transpose() + cond.resid_cov;
      comps.push_back(std::move(g));
    }
  }
  std::vector<std::string> dims;
  dims.push_back(obs.t_column());
  for (const auto& x : x_cols) dims.push_back(x);
  for (const auto& y : y_cols) dims.push_back(y + "_" + std::to_string(t));
  return Law::gaussian_mixture(std::move(dims), std::move(comps));
}

Law identify_mc(const ObservationalView& obs, int t, const McBudget& budget) {
  const auto s = obs.sample(budget.seed, budget.n);
  const long n = s.t.size();
  const int d = static_cast<int>(s.x.cols());
  const int p = static_cast<int>(s.y.cols());

  // Equal-mass bins per covariate (~n^{1/3} cut points each).
  const int k = std::max(1, static_cast<int>(std::ceil(std::cbrt(static_cast<double>(n)))));
  std::vector<int> cell(static_cast<std::size_t>(n), 0);
  if (d > 0) {
    int stride = 1;
    const int k_per_coord = std::max(1, static_cast<int>(std::round(std::pow(k, 1.0 / d))));
    for (int j = 0; j < d; ++j) {
      const auto bins = equal_mass_bins(s.x.col(j), k_per_coord);
      for (long i = 0; i < n; ++i) cell[static_cast<std::size_t>(i)] += stride * bins[static_cast<std::size_t>(i)];
      stride *= k_per_coord;
    }
  }
  // Donor pools: rows with T=t per cell, sorted by the first covariate so
  // each draw resamples the nearest donor inside its stratum. Uniform draws
  // from wide tail bins would leave an O(bin width) bias in the conditional
  // law; matching keeps it at the donor-spacing scale.
  std::map<int, std::vector<long>> stratum_rows;
  for (long i = 0; i < n; ++i) {
    if (level_of(s.t(i), obs.treatment_support()) == t) {
      stratum_rows[cell[static_cast<std::size_t>(i)]].push_back(i);
    }
  }
  for (auto& [c, rows] : stratum_rows) {
    if (d > 0) {
      std::sort(rows.begin(), rows.end(), [&](long a, long b) {
        if (s.x(a, 0) != s.x(b, 0)) return s.x(a, 0) < s.x(b, 0);
        return a < b;
      });
    }
  }
  // Global donor list, used when a sparse tail cell drew no treated units
  // (nearest-match fallback). A stratum empty over more than 10% of the
  // sample indicates a structural positivity failure, not tail sparsity.
  std::vector<long> global_pool;
  for (long i = 0; i < n; ++i) {
    if (level_of(s.t(i), obs.treatment_support()) == t) global_pool.push_back(i);
  }
  if (global_pool.empty()) {
    throw PositivityViolation("no draws with T=" + std::to_string(t));
  }
  long uncovered = 0;
  for (long i = 0; i < n; ++i) {
    const auto it = stratum_rows.find(cell[static_cast<std::size_t>(i)]);
    if (it == stratum_rows.end() || it->second.empty()) ++uncovered;
  }
  if (static_cast<double>(uncovered) > 0.1 * static_cast<double>(n)) {
    throw PositivityViolation("covariate bins without T=" + std::to_string(t) +
                              " samples cover " + std::to_string(uncovered) + " of " +
                              std::to_string(n) + " draws");
  }
  if (d > 0) {
    std::sort(global_pool.begin(), global_pool.end(), [&](long a, long b) {
      if (s.x(a, 0) != s.x(b, 0)) return s.x(a, 0) < s.x(b, 0);
      return a < b;
    });
  }
  auto nearest_in = [&](const std::vector<long>& pool, long i) {
    long donor = pool.front();
    if (d > 0 && pool.size() > 1) {
      const double xi = s.x(i, 0);
      const auto lo = std::lower_bound(pool.begin(), pool.end(), xi, [&](long a, double v) {
        return s.x(a, 0) < v;
      });
      donor = lo == pool.end() ? pool.back() : *lo;
      if (lo != pool.begin()) {
        const long prev = *(lo - 1);
        if (std::abs(s.x(prev, 0) - xi) <= std::abs(s.x(donor, 0) - xi)) donor = prev;
      }
    }
    return donor;
  };
  Eigen::MatrixXd sample(n, 1 + d + p);
  for (long i = 0; i < n; ++i) {
    const auto it = stratum_rows.find(cell[static_cast<std::size_t>(i)]);
    const bool have_cell = it != stratum_rows.end() && !it->second.empty();
    const long donor = nearest_in(have_cell ? it->second : global_pool, i);
    sample(i, 0) = s.t(i);
    sample.row(i).segment(1, d) = s.x.row(i);
    sample.row(i).segment(1 + d, p) = s.y.row(donor);
  }
  std::vector<std::string> dims;
  dims.push_back(obs.t_column());
  for (const auto& x : obs.x_columns()) dims.push_back(x);
  for (int j = 0; j < p; ++j) {
    dims.push_back((obs.y_columns().empty() ? "Y" + std::to_string(j) : obs.y_columns()[static_cast<std::size_t>(j)]) +
                   "_" + std::to_string(t));
  }
  return Law::empirical(std::move(dims), std::move(sample), budget.seed, "identify-mc");
}

}  // namespace

Law identify_single_outcome(const ObservationalView& obs, int t, Engine engine,
                            const McBudget& budget) {
  bool in_support = false;
  for (int lvl : obs.treatment_support()) in_support = in_support || lvl == t;
  if (!in_support) throw ValidationError("t outside treatment support");
  switch (engine) {
    case Engine::ExactDiscrete:
      if (!obs.enumerable()) throw EngineInapplicable("exact identification needs a finite space");
      return identify_exact(obs, t);
    case Engine::LinearGaussian:
      return identify_gaussian(obs, t);
    case Engine::MonteCarlo:
      return identify_mc(obs, t, budget);
  }
  throw EngineInapplicable("unknown engine");
}

// ---------------------------------------------------------------------------
// structural_representation

StructuralRepresentation structural_representation(const FunctionalRcm& rcm) {
  AtomTable atoms;
  try {
    atoms = enumerate_noise(rcm.noise());
  } catch (const NotEnumerable& e) {
    throw NotEnumerable(std::string("structural representation is constructive only for finite "
                                    "noise spaces: ") +
                        e.what());
  }
  const RcmBatch rb = rcm.generate(atoms.coords);
  const int d = rcm.covariate_dim();
  const int p = rcm.outcome_dim();
  const std::size_t n_levels = rcm.treatment_support().size();

  // Collapse to distinct (T, X, (Y_t)) tuples: those are the constructed
  // noise atoms, carrying the joint law.
  const long n_atoms = atoms.coords.rows();
  Eigen::MatrixXd tuples(n_atoms, 1 + d + static_cast<long>(n_levels) * p);
  for (long i = 0; i < n_atoms; ++i) {
    tuples(i, 0) = rb.t(i);
    tuples.row(i).segment(1, d) = rb.x.row(i);
    for (std::size_t t = 0; t < n_levels; ++t) {
      tuples.row(i).segment(1 + d + static_cast<long>(t) * p, p) = rb.y_t[t].row(i);
    }
  }
  std::vector<Eigen::VectorXd> reps;
  std::vector<int> group(static_cast<std::size_t>(n_atoms));
  {
    // Exact-equality grouping (values are produced, never computed).
    for (long i = 0; i < n_atoms; ++i) {
      int g = -1;
      for (std::size_t r = 0; r < reps.size(); ++r) {
        if ((reps[r] - tuples.row(i).transpose()).cwiseAbs().maxCoeff() == 0.0) {
          g = static_cast<int>(r);
          break;
        }
      }
      if (g < 0) {
        reps.push_back(tuples.row(i).transpose());
        g = static_cast<int>(reps.size()) - 1;
      }
      group[static_cast<std::size_t>(i)] = g;
    }
  }
  std::vector<double> probs(reps.size(), 0.0);
  for (long i = 0; i < n_atoms; ++i) {
    probs[static_cast<std::size_t>(group[static_cast<std::size_t>(i)])] += atoms.probs(i);
  }

  // One exogenous noise whose atoms index the tuples.
  std::vector<WeightedValue> u_atoms;
  for (std::size_t r = 0; r < reps.size(); ++r) {
    u_atoms.push_back({static_cast<double>(r), probs[r]});
  }
  NoiseSpace space({NoiseSpec::discrete("U", u_atoms)});

  // g_T and g_X read coordinates off U; g_Y is the (t, u) table.
  std::vector<std::pair<std::string, Expression>> eqs;
  {
    TableDef t_table;
    t_table.inputs = {"U"};
    for (std::size_t r = 0; r < reps.size(); ++r) {
      t_table.rows.push_back({{static_cast<double>(r)}, reps[r](0)});
    }
    eqs.emplace_back("T", Expression::table_lookup(std::move(t_table)));
  }
  std::vector<std::string> x_names, y_names;
  for (int j = 0; j < d; ++j) {
    TableDef x_table;
    x_table.inputs = {"U"};
    for (std::size_t r = 0; r < reps.size(); ++r) {
      x_table.rows.push_back({{static_cast<double>(r)}, reps[r](1 + j)});
    }
    const std::string name = d == 1 ? "X" : "X" + std::to_string(j + 1);
    x_names.push_back(name);
    eqs.emplace_back(name, Expression::table_lookup(std::move(x_table)));
  }
  for (int i = 0; i < p; ++i) {
    TableDef y_table;
    y_table.inputs = {"T", "U"};
    for (std::size_t r = 0; r < reps.size(); ++r) {
      for (std::size_t t = 0; t < n_levels; ++t) {
        y_table.rows.push_back(
            {{static_cast<double>(t), static_cast<double>(r)},
             reps[r](1 + d + static_cast<long>(t) * p + i)});
      }
    }
    const std::string name = p == 1 ? "Y" : "Y" + std::to_string(i + 1);
    y_names.push_back(name);
    eqs.emplace_back(name, Expression::table_lookup(std::move(y_table)));
  }
  ModelRoles roles;
  roles.treatment = "T";
  roles.covariates = x_names;
  roles.outcomes = y_names;
  roles.treatment_support = rcm.treatment_support();

  StructuralRepresentation out{ScmModel(std::move(eqs), std::move(space), std::move(roles)),
                               {},
                               atoms};
  out.atom_map.reserve(static_cast<std::size_t>(n_atoms));
  for (long i = 0; i < n_atoms; ++i) {
    out.atom_map.push_back(static_cast<std::size_t>(group[static_cast<std::size_t>(i)]));
  }
  return out;
}

double representation_roundtrip_gap(const FunctionalRcm& rcm,
                                    const StructuralRepresentation& rep) {
  const RcmBatch input = rcm.generate(rep.input_atoms.coords);
  const FunctionalRcm rep_rcm = FunctionalRcm::entailed(rep.model);
  const AtomTable rep_atoms = enumerate_noise(rep.model.noise());
  const RcmBatch output = rep_rcm.generate(rep_atoms.coords);

  double worst = 0.0;
  const std::size_t n_levels = rcm.treatment_support().size();
  for (long i = 0; i < rep.input_atoms.coords.rows(); ++i) {
    if (rep.input_atoms.probs(i) <= 0.0) continue;
    const long k = static_cast<long>(rep.atom_map[static_cast<std::size_t>(i)]);
    worst = std::max(worst, std::abs(input.t(i) - output.t(k)));
    if (input.x.cols() > 0) {
      worst = std::max(worst, (input.x.row(i) - output.x.row(k)).cwiseAbs().maxCoeff());
    }
    for (std::size_t t = 0; t < n_levels; ++t) {
      worst = std::max(worst, (input.y_t[t].row(i) - output.y_t[t].row(k)).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace cfl
