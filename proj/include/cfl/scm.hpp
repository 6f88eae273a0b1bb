#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cfl/engine.hpp"
#include "cfl/expression.hpp"
#include "cfl/law.hpp"
#include "cfl/noise.hpp"

namespace cfl {

// Perfect do-intervention targets: endogenous variable -> forced value.
struct Intervention {
  std::vector<std::pair<std::string, double>> assignments;

  static Intervention on(const std::string& var, double value) {
    return Intervention{{{var, value}}};
  }
  Intervention& and_on(const std::string& var, double value) {
    assignments.emplace_back(var, value);
    return *this;
  }
};

// Graphical assumption checks; pure functions of the edge structure.
struct AssumptionFlags {
  bool acyclic = false;
  bool outcome_a5 = false;
  bool indep_noises_a6 = false;
  bool no_posttreatment_a7_parent = false;
  bool no_posttreatment_a7_descendant = false;
};

struct CausalGraph {
  std::vector<std::string> endogenous;
  std::vector<std::string> exogenous;
  std::vector<std::pair<std::string, std::string>> edges;  // parent -> child
  bool acyclic = true;
};

// Designated roles of an observational vector (T, X, Y).
struct ModelRoles {
  std::string treatment;
  std::vector<std::string> covariates;
  std::vector<std::string> outcomes;
  std::vector<int> treatment_support;  // {0, ..., N}
};

// Acyclic structural causal model: named endogenous variables, one equation
// per variable over parent variables and exogenous noises. Immutable after
// construction; interventions produce new models sharing the noise space.
class ScmModel {
public:
  ScmModel(std::vector<std::pair<std::string, Expression>> equations, NoiseSpace noise,
           ModelRoles roles);

  const std::vector<std::string>& variables() const { return variables_; }
  const Expression& equation(const std::string& var) const;
  const NoiseSpace& noise() const { return noise_; }
  const ModelRoles& roles() const { return roles_; }

  int var_index(const std::string& name) const;  // -1 when absent
  bool is_variable(const std::string& name) const { return var_index(name) >= 0; }

  // Topological order with declaration-order tie-breaking.
  const std::vector<std::string>& topo_order() const { return topo_order_; }

  const std::vector<std::string>& endo_parents(const std::string& var) const;
  const std::vector<std::string>& exo_parents(const std::string& var) const;
  std::set<std::string> descendants(const std::string& var) const;

  CausalGraph graph() const;

  // Replaces the named equation; used internally by interventions.
  ScmModel with_equation(const std::string& var, Expression eq) const;

private:
  std::vector<std::string> variables_;
  std::vector<Expression> equations_;
  NoiseSpace noise_;
  ModelRoles roles_;
  std::vector<std::string> topo_order_;
  std::vector<std::vector<std::string>> endo_parents_;
  std::vector<std::vector<std::string>> exo_parents_;

  void validate_and_index();
  void check_treatment_support();
};

// Returns the topological order, throwing CyclicGraph / UnknownReference on
// invalid models. (Construction already validates; this re-checks.)
std::vector<std::string> validate(const ScmModel& model);

// Solves the structural equations draw-by-draw along the topological order.
// Output columns follow the declaration order of the variables.
Eigen::MatrixXd solve(const ScmModel& model, const NoiseBatch& batch);
Eigen::MatrixXd solve_on(const ScmModel& model, const Eigen::MatrixXd& noise_values);

ScmModel apply_do(const ScmModel& model, const Intervention& iv);

// Fixes T to `t` only inside the outcome equations; treatment and covariate
// equations stay untouched.
ScmModel outcome_equation_intervention(const ScmModel& model, double t);

AssumptionFlags check_assumptions(const ScmModel& model);

// Deterministic map realizing the non-intervened block: feeds values for
// Endo(I^c) \ I^c and noises for Exo(I^c), returns values for I^c.
class VectorizedMap {
public:
  const std::vector<std::string>& boundary_inputs() const { return boundary_; }
  const std::vector<std::string>& noise_inputs() const { return noise_inputs_; }
  const std::vector<std::string>& outputs() const { return outputs_; }

  std::map<std::string, double> operator()(const std::map<std::string, double>& boundary,
                                           const std::map<std::string, double>& noise) const;

private:
  friend VectorizedMap vectorize(const ScmModel&, const std::vector<std::string>&);
  std::vector<std::string> boundary_;
  std::vector<std::string> noise_inputs_;
  std::vector<std::string> outputs_;                       // topo order within I^c
  std::vector<std::pair<std::string, Expression>> steps_;  // equations in topo order
};

VectorizedMap vectorize(const ScmModel& model, const std::vector<std::string>& intervened);

// Three-step counterfactual inference: abduction of L(U | evidence), action
// (apply_do), prediction (push the posterior through the intervened model).
Law counterfactual_law(const ScmModel& model, const std::map<std::string, double>& evidence,
                       const Intervention& iv, const std::vector<std::string>& query,
                       Engine engine, const McBudget& budget = {});

}  // namespace cfl
