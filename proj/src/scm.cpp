#include "cfl/scm.hpp"

#include <algorithm>
#include <deque>

#include "cfl/errors.hpp"

namespace cfl {

namespace {

// Flat evaluation program over slot-resolved references; one stack machine
// pass per draw keeps batch solving cheap.
struct CompiledExpr {
  enum class Op : std::uint8_t { PushConst, PushNoise, PushVar, Add, Mul, Neg, Min, Max, Ind, Table };
  struct Step {
    Op op;
    double value = 0.0;
    int slot = 0;
    const TableDef* table = nullptr;
    std::vector<std::pair<bool, int>> key_slots;  // (is_noise, slot) per table input
  };
  std::vector<Step> steps;

  double eval(const double* noise_row, const double* var_row, std::vector<double>& stack) const {
    stack.clear();
    for (const auto& s : steps) {
      switch (s.op) {
        case Op::PushConst:
          stack.push_back(s.value);
          break;
        case Op::PushNoise:
          stack.push_back(noise_row[s.slot]);
          break;
        case Op::PushVar:
          stack.push_back(var_row[s.slot]);
          break;
        case Op::Add: {
          const double b = stack.back();
          stack.pop_back();
          stack.back() += b;
          break;
        }
        case Op::Mul: {
          const double b = stack.back();
          stack.pop_back();
          stack.back() *= b;
          break;
        }
        case Op::Neg:
          stack.back() = -stack.back();
          break;
        case Op::Min: {
          const double b = stack.back();
          stack.pop_back();
          stack.back() = std::fmin(stack.back(), b);
          break;
        }
        case Op::Max: {
          const double b = stack.back();
          stack.pop_back();
          stack.back() = std::fmax(stack.back(), b);
          break;
        }
        case Op::Ind:
          stack.back() = stack.back() > 0.0 ? 1.0 : 0.0;
          break;
        case Op::Table: {
          std::vector<double> key;
          key.reserve(s.key_slots.size());
          for (auto [is_noise, slot] : s.key_slots) {
            key.push_back(is_noise ? noise_row[slot] : var_row[slot]);
          }
          if (const double* v = s.table->find(key)) {
            stack.push_back(*v);
          } else {
            std::string k = "(";
            for (std::size_t j = 0; j < key.size(); ++j)
              k += (j ? "," : "") + std::to_string(key[j]);
            throw MissingTableEntry("no row for inputs " + k + " in table over " +
                                    std::to_string(key.size()) + " inputs");
          }
          break;
        }
      }
    }
    return stack.back();
  }
};

CompiledExpr compile_expr(const Expression& e, const ScmModel& model) {
  CompiledExpr out;
  using Op = CompiledExpr::Op;
  std::function<void(int)> go = [&](int i) {
    const auto& n = e.nodes()[static_cast<std::size_t>(i)];
    switch (n.kind) {
      case Expression::Kind::Constant:
        out.steps.push_back({Op::PushConst, n.value, 0, nullptr, {}});
        break;
      case Expression::Kind::Ref: {
        const int v = model.var_index(n.name);
        if (v >= 0) {
          out.steps.push_back({Op::PushVar, 0.0, v, nullptr, {}});
        } else {
          const int u = model.noise().index_of(n.name);
          if (u < 0) throw UnknownReference(n.name);
          out.steps.push_back({Op::PushNoise, 0.0, u, nullptr, {}});
        }
        break;
      }
      case Expression::Kind::Add:
        go(n.a);
        go(n.b);
        out.steps.push_back({Op::Add, 0.0, 0, nullptr, {}});
        break;
      case Expression::Kind::Mul:
        go(n.a);
        go(n.b);
        out.steps.push_back({Op::Mul, 0.0, 0, nullptr, {}});
        break;
      case Expression::Kind::Neg:
        go(n.a);
        out.steps.push_back({Op::Neg, 0.0, 0, nullptr, {}});
        break;
      case Expression::Kind::Min:
        go(n.a);
        go(n.b);
        out.steps.push_back({Op::Min, 0.0, 0, nullptr, {}});
        break;
      case Expression::Kind::Max:
        go(n.a);
        go(n.b);
        out.steps.push_back({Op::Max, 0.0, 0, nullptr, {}});
        break;
      case Expression::Kind::Indicator:
        go(n.a);
        out.steps.push_back({Op::Ind, 0.0, 0, nullptr, {}});
        break;
      case Expression::Kind::TableLookup: {
        CompiledExpr::Step s;
        s.op = Op::Table;
        s.table = &e.tables()[static_cast<std::size_t>(n.table)];
        for (const auto& name : s.table->inputs) {
          const int v = model.var_index(name);
          if (v >= 0) {
            s.key_slots.emplace_back(false, v);
          } else {
            const int u = model.noise().index_of(name);
            if (u < 0) throw UnknownReference(name);
            s.key_slots.emplace_back(true, u);
          }
        }
        out.steps.push_back(std::move(s));
        break;
      }
    }
  };
  go(e.root());
  return out;
}

}  // namespace

ScmModel::ScmModel(std::vector<std::pair<std::string, Expression>> equations, NoiseSpace noise,
                   ModelRoles roles)
    : noise_(std::move(noise)), roles_(std::move(roles)) {
  variables_.reserve(equations.size());
  equations_.reserve(equations.size());
  for (auto& [name, eq] : equations) {
    if (var_index(name) >= 0) throw ValidationError("duplicate equation for variable " + name);
    variables_.push_back(name);
    equations_.push_back(std::move(eq));
  }
  validate_and_index();
}

void ScmModel::validate_and_index() {
  const std::size_t n = variables_.size();
  endo_parents_.assign(n, {});
  exo_parents_.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& ref : equations_[i].references()) {
      if (var_index(ref) >= 0) {
        endo_parents_[i].push_back(ref);
      } else if (noise_.has(ref)) {
        exo_parents_[i].push_back(ref);
      } else {
        throw UnknownReference(ref);
      }
    }
    // Table inputs must be discrete-valued; for noise inputs that is
    // checkable against the specs directly.
    for (const auto& table : equations_[i].tables()) {
      for (const auto& input : table.inputs) {
        const int u = noise_.index_of(input);
        if (u >= 0 && !noise_.spec(static_cast<std::size_t>(u)).finite_support()) {
          throw ValidationError("table input " + input + " has continuous support");
        }
      }
    }
  }

  // Kahn's algorithm with a declaration-order bucket for stable tie-breaking.
  std::vector<int> in_degree(n, 0);
  std::vector<std::vector<int>> children(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& p : endo_parents_[i]) {
      const int pi = var_index(p);
      ++in_degree[i];
      children[static_cast<std::size_t>(pi)].push_back(static_cast<int>(i));
    }
  }
  std::vector<bool> emitted(n, false);
  topo_order_.clear();
  std::vector<int> degree = in_degree;
  for (std::size_t emitted_count = 0; emitted_count < n;) {
    int next = -1;
    for (std::size_t i = 0; i < n; ++i) {
      if (!emitted[i] && degree[i] == 0) {
        next = static_cast<int>(i);
        break;
      }
    }
    if (next < 0) {
      // Extract a witness cycle by walking unemitted parents.
      std::vector<int> path;
      std::vector<int> seen(n, -1);
      int cur = -1;
      for (std::size_t i = 0; i < n; ++i)
        if (!emitted[i]) {
          cur = static_cast<int>(i);
          break;
        }
      while (seen[static_cast<std::size_t>(cur)] < 0) {
        seen[static_cast<std::size_t>(cur)] = static_cast<int>(path.size());
        path.push_back(cur);
        for (const auto& p : endo_parents_[static_cast<std::size_t>(cur)]) {
          const int pi = var_index(p);
          if (!emitted[static_cast<std::size_t>(pi)]) {
            cur = pi;
            break;
          }
        }
      }
      std::vector<std::string> cycle;
      for (std::size_t k = static_cast<std::size_t>(seen[static_cast<std::size_t>(cur)]);
           k < path.size(); ++k) {
        cycle.push_back(variables_[static_cast<std::size_t>(path[k])]);
      }
      std::string desc;
      for (const auto& v : cycle) desc += v + " -> ";
      desc += cycle.empty() ? "?" : cycle.front();
      throw CyclicGraph(cycle, desc);
    }
    emitted[static_cast<std::size_t>(next)] = true;
    ++emitted_count;
    topo_order_.push_back(variables_[static_cast<std::size_t>(next)]);
    for (int c : children[static_cast<std::size_t>(next)]) --degree[static_cast<std::size_t>(c)];
  }

  // Role sanity.
  if (!roles_.treatment.empty()) {
    if (var_index(roles_.treatment) < 0) throw UnknownReference(roles_.treatment);
    for (const auto& x : roles_.covariates)
      if (var_index(x) < 0) throw UnknownReference(x);
    for (const auto& y : roles_.outcomes)
      if (var_index(y) < 0) throw UnknownReference(y);
    if (roles_.treatment_support.empty()) {
      throw ValidationError("treatment declared without a support");
    }
    for (std::size_t k = 0; k < roles_.treatment_support.size(); ++k) {
      if (roles_.treatment_support[k] != static_cast<int>(k)) {
        throw ValidationError("treatment support must be {0, ..., N}");
      }
    }
    check_treatment_support();
  }
}

void ScmModel::check_treatment_support() {
  // The T equation must land in the declared support: verified on every
  // positive-probability atom when the space is finite, on a fixed-seed
  // sample otherwise.
  bool finite = true;
  for (const auto& s : noise_.specs()) finite = finite && s.finite_support();
  Eigen::MatrixXd noise_values;
  if (finite) {
    noise_values = enumerate_noise(noise_).coords;
  } else {
    constexpr std::uint64_t kSupportCheckSeed = 0x5c5c5c5cull;
    noise_values = sample_noise(noise_, kSupportCheckSeed, 4096).values;
  }
  const Eigen::MatrixXd solved = solve_on(*this, noise_values);
  const int t_col = var_index(roles_.treatment);
  for (Eigen::Index i = 0; i < solved.rows(); ++i) {
    const double t = solved(i, t_col);
    bool ok = false;
    for (int lvl : roles_.treatment_support) {
      if (static_cast<double>(lvl) == t) ok = true;
    }
    if (!ok) {
      throw ValidationError("treatment equation produced " + std::to_string(t) +
                            ", outside the declared support");
    }
  }
}

const Expression& ScmModel::equation(const std::string& var) const {
  const int i = var_index(var);
  if (i < 0) throw UnknownReference(var);
  return equations_[static_cast<std::size_t>(i)];
}

int ScmModel::var_index(const std::string& name) const {
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (variables_[i] == name) return static_cast<int>(i);
  }
  return -1;
}

const std::vector<std::string>& ScmModel::endo_parents(const std::string& var) const {
  const int i = var_index(var);
  if (i < 0) throw UnknownReference(var);
  return endo_parents_[static_cast<std::size_t>(i)];
}

const std::vector<std::string>& ScmModel::exo_parents(const std::string& var) const {
  const int i = var_index(var);
  if (i < 0) throw UnknownReference(var);
  return exo_parents_[static_cast<std::size_t>(i)];
}

std::set<std::string> ScmModel::descendants(const std::string& var) const {
  std::set<std::string> out;
  std::deque<std::string> frontier{var};
  while (!frontier.empty()) {
    const std::string cur = frontier.front();
    frontier.pop_front();
    for (std::size_t i = 0; i < variables_.size(); ++i) {
      const auto& parents = endo_parents_[i];
      if (std::find(parents.begin(), parents.end(), cur) == parents.end()) continue;
      if (out.insert(variables_[i]).second) frontier.push_back(variables_[i]);
    }
  }
  return out;
}

CausalGraph ScmModel::graph() const {
  CausalGraph g;
  g.endogenous = variables_;
  for (const auto& s : noise_.specs()) g.exogenous.push_back(s.name());
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    for (const auto& p : endo_parents_[i]) g.edges.emplace_back(p, variables_[i]);
    for (const auto& u : exo_parents_[i]) g.edges.emplace_back(u, variables_[i]);
  }
  g.acyclic = true;
  return g;
}

ScmModel ScmModel::with_equation(const std::string& var, Expression eq) const {
  const int i = var_index(var);
  if (i < 0) throw UnknownReference(var);
  std::vector<std::pair<std::string, Expression>> eqs;
  eqs.reserve(variables_.size());
  for (std::size_t k = 0; k < variables_.size(); ++k) {
    eqs.emplace_back(variables_[k],
                     static_cast<int>(k) == i ? eq : equations_[k]);
  }
  return ScmModel(std::move(eqs), noise_, roles_);
}

std::vector<std::string> validate(const ScmModel& model) { return model.topo_order(); }

Eigen::MatrixXd solve_on(const ScmModel& model, const Eigen::MatrixXd& noise_values) {
  if (noise_values.cols() != static_cast<Eigen::Index>(model.noise().size())) {
    throw DimensionMismatch("noise batch has " + std::to_string(noise_values.cols()) +
                            " columns, space has " + std::to_string(model.noise().size()));
  }
  const long n = noise_values.rows();
  const std::size_t k = model.variables().size();
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(k));

  struct Step {
    int var_slot;
    CompiledExpr program;
  };
  std::vector<Step> steps;
  steps.reserve(k);
  for (const auto& var : model.topo_order()) {
    steps.push_back({model.var_index(var), compile_expr(model.equation(var), model)});
  }

  std::vector<double> noise_row(model.noise().size());
  std::vector<double> var_row(k);
  std::vector<double> stack;
  for (long i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < model.noise().size(); ++j)
      noise_row[j] = noise_values(i, static_cast<Eigen::Index>(j));
    for (const auto& s : steps) {
      var_row[static_cast<std::size_t>(s.var_slot)] =
          s.program.eval(noise_row.data(), var_row.data(), stack);
    }
    for (std::size_t j = 0; j < k; ++j) out(i, static_cast<Eigen::Index>(j)) = var_row[j];
  }
  return out;
}

Eigen::MatrixXd solve(const ScmModel& model, const NoiseBatch& batch) {
  if (batch.space_id != model.noise().id()) {
    throw SpaceMismatch("batch was drawn from a different noise space");
  }
  return solve_on(model, batch.values);
}

ScmModel apply_do(const ScmModel& model, const Intervention& iv) {
  std::set<std::string> seen;
  for (const auto& [var, value] : iv.assignments) {
    if (model.var_index(var) < 0) throw UnknownReference(var);
    if (!seen.insert(var).second) {
      throw ValidationError("duplicate intervention target " + var);
    }
    if (var == model.roles().treatment) {
      bool in_support = false;
      for (int lvl : model.roles().treatment_support) {
        if (static_cast<double>(lvl) == value) in_support = true;
      }
      if (!in_support) {
        throw ValidationError("do(" + var + "=" + std::to_string(value) +
                              ") outside treatment support");
      }
    }
  }
  ScmModel out = model;
  for (const auto& [var, value] : iv.assignments) {
    out = out.with_equation(var, Expression::constant(value));
  }
  return out;
}

ScmModel outcome_equation_intervention(const ScmModel& model, double t) {
  const auto& roles = model.roles();
  if (roles.treatment.empty()) throw ValidationError("model has no designated treatment");
  bool in_support = false;
  for (int lvl : roles.treatment_support)
    if (static_cast<double>(lvl) == t) in_support = true;
  if (!in_support) throw ValidationError("t outside treatment support");
  ScmModel out = model;
  for (const auto& y : roles.outcomes) {
    out = out.with_equation(y, model.equation(y).substitute(roles.treatment, t));
  }
  return out;
}

AssumptionFlags check_assumptions(const ScmModel& model) {
  const auto& roles = model.roles();
  if (roles.treatment.empty()) throw ValidationError("model has no designated treatment");
  AssumptionFlags flags;
  flags.acyclic = true;  // construction enforces it

  auto is_outcome = [&](const std::string& v) {
    return std::find(roles.outcomes.begin(), roles.outcomes.end(), v) != roles.outcomes.end();
  };

  // A5: no outcome variable is a parent of T or of any covariate.
  flags.outcome_a5 = true;
  for (const auto& p : model.endo_parents(roles.treatment)) {
    if (is_outcome(p)) flags.outcome_a5 = false;
  }
  for (const auto& x : roles.covariates) {
    for (const auto& p : model.endo_parents(x)) {
      if (is_outcome(p)) flags.outcome_a5 = false;
    }
  }

  // A6: Exo(Y) disjoint from Exo(T) and Exo(X).
  std::set<std::string> exo_y;
  for (const auto& y : roles.outcomes) {
    for (const auto& u : model.exo_parents(y)) exo_y.insert(u);
  }
  std::set<std::string> exo_tx(model.exo_parents(roles.treatment).begin(),
                               model.exo_parents(roles.treatment).end());
  for (const auto& x : roles.covariates) {
    for (const auto& u : model.exo_parents(x)) exo_tx.insert(u);
  }
  flags.indep_noises_a6 = true;
  for (const auto& u : exo_y) {
    if (exo_tx.count(u)) flags.indep_noises_a6 = false;
  }

  // A7, parent form: T is not a parent of any covariate.
  flags.no_posttreatment_a7_parent = true;
  for (const auto& x : roles.covariates) {
    const auto& parents = model.endo_parents(x);
    if (std::find(parents.begin(), parents.end(), roles.treatment) != parents.end()) {
      flags.no_posttreatment_a7_parent = false;
    }
  }

  // A7, descendant form: no covariate is a descendant of T.
  flags.no_posttreatment_a7_descendant = true;
  const auto desc = model.descendants(roles.treatment);
  for (const auto& x : roles.covariates) {
    if (desc.count(x)) flags.no_posttreatment_a7_descendant = false;
  }
  return flags;
}

std::map<std::string, double> VectorizedMap::operator()(
    const std::map<std::string, double>& boundary,
    const std::map<std::string, double>& noise) const {
  std::map<std::string, double> values;
  for (const auto& b : boundary_) {
    auto it = boundary.find(b);
    if (it == boundary.end()) throw UnknownReference("missing boundary input " + b);
    values[b] = it->second;
  }
  auto lookup = [&](const std::string& name) -> double {
    if (auto it = values.find(name); it != values.end()) return it->second;
    if (auto it = noise.find(name); it != noise.end()) return it->second;
    throw UnknownReference("missing input " + name);
  };
  std::map<std::string, double> out;
  for (const auto& [var, eq] : steps_) {
    const double v = eq.eval(lookup);
    values[var] = v;
    out[var] = v;
  }
  return out;
}

VectorizedMap vectorize(const ScmModel& model, const std::vector<std::string>& intervened) {
  std::set<std::string> inter;
  for (const auto& v : intervened) {
    if (model.var_index(v) < 0) throw UnknownReference(v);
    inter.insert(v);
  }
  VectorizedMap f;
  std::set<std::string> boundary_set, noise_set;
  for (const auto& var : model.topo_order()) {
    if (inter.count(var)) continue;
    f.outputs_.push_back(var);
    f.steps_.emplace_back(var, model.equation(var));
    for (const auto& p : model.endo_parents(var)) {
      if (inter.count(p) && boundary_set.insert(p).second) f.boundary_.push_back(p);
    }
    for (const auto& u : model.exo_parents(var)) {
      if (noise_set.insert(u).second) f.noise_inputs_.push_back(u);
    }
  }
  return f;
}

}  // namespace cfl
