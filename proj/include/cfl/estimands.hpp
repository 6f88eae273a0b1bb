#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "cfl/engine.hpp"
#include "cfl/law.hpp"
#include "cfl/rcm.hpp"
#include "cfl/scm.hpp"

namespace cfl {

// A computed causal effect. Monte-Carlo values carry standard errors;
// analytic values do not.
struct EstimandReport {
  std::string name;
  double value = 0.0;
  Engine engine = Engine::LinearGaussian;
  std::optional<double> standard_error;
  Eigen::VectorXd x;  // conditioning point (empty for unconditional effects)
};

// Default conditioning grid: 9 points at equispaced quantile ranks of L(X)
// (estimated from a seeded sample; the effect values themselves stay exact
// under the analytic engines).
std::vector<Eigen::VectorXd> covariate_grid(const ObservationalView& obs, int points = 9,
                                            std::uint64_t seed = 77);

// E[Y | X=x, T=1] - E[Y | X=x, T=0]: the potential-outcome CATE identified
// from the observational law under positivity and single-outcome
// ignorability.
EstimandReport cate_rcm(const ObservationalView& obs, const Eigen::VectorXd& x, Engine engine,
                        const McBudget& budget = {});

// E[Y_{T=1} - Y_{T=0} | X=x]: the structural CATE via coupled
// do-interventions and abduction on the factual covariates.
EstimandReport cate_scm(const ScmModel& model, const Eigen::VectorXd& x, Engine engine,
                        const McBudget& budget = {});

// E[Y_{T=1,X=x} - Y_{T=0,X=x}]: joint interventions on treatment and
// covariates.
EstimandReport direct_effect_scm(const ScmModel& model, const Eigen::VectorXd& x, Engine engine,
                                 const McBudget& budget = {});

// E[Y_{T=1} | X_{T=1}=x] - E[Y_{T=0} | X_{T=0}=x]: post-intervention
// conditioning inside each intervened model.
EstimandReport interventional_cate(const ScmModel& model, const Eigen::VectorXd& x, Engine engine,
                                   const McBudget& budget = {});

// L(T, X, f_Y(t, X, U_Y)): the law of the outcome-equation-intervention
// triple, solved on fresh draws (or in closed form).
Law theorem1_law(const ScmModel& model, int t, Engine engine, const McBudget& budget = {});

// The deviation term of the identified CATE when the outcome noise may
// depend on the rest: sum over exogenous parents U of Y, weighted by their
// outcome-equation coefficients, of E[U | X=x, T=1] - E[U | X=x, T=0].
EstimandReport relaxed_noise_cate_gap(const ScmModel& model, const Eigen::VectorXd& x,
                                      Engine engine, const McBudget& budget = {});

// Difference of means of two potential-outcome laws. The coupling-dependent
// law of Y_1 - Y_0 is deliberately not computable from this signature.
EstimandReport ate(const Law& y1_law, const Law& y0_law);

}  // namespace cfl
