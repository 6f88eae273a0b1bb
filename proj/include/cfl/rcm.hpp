#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfl/engine.hpp"
#include "cfl/law.hpp"
#include "cfl/noise.hpp"
#include "cfl/scm.hpp"

namespace cfl {

enum class RcmProvenance { Entailed, OutcomeEquation, UserDefined };

// One evaluated batch of an RCM: realized treatment, covariates, outcome and
// every potential outcome, row-coupled on a shared noise draw.
struct RcmBatch {
  Eigen::VectorXd t;                  // n
  Eigen::MatrixXd x;                  // n x d
  Eigen::MatrixXd y;                  // n x p
  std::vector<Eigen::MatrixXd> y_t;   // per treatment level: n x p
};

// A Rubin causal model realized as a measurable map from a noise space to
// (T, X, (Y_t)). Internally the map is one augmented structural model over
// the shared space, so coupled evaluation is exact draw-by-draw.
class FunctionalRcm {
public:
  // do(T=t) for every t on a shared draw (Lemma-4 construction).
  static FunctionalRcm entailed(const ScmModel& model);

  // T fixed to t inside the outcome equations only; everything else intact.
  static FunctionalRcm outcome_equation(const ScmModel& model);

  // Potential outcomes given as expressions over noises and the base model's
  // solved variables; consistency is NOT assumed and must be checked.
  // po_exprs[t] holds the p expressions of Y_t.
  static FunctionalRcm user(const ScmModel& base,
                            const std::vector<std::vector<Expression>>& po_exprs);

  // Free-standing RCM: T / X / Y_t expressions over a noise space; the
  // observational outcome is defined through the consistency rule.
  static FunctionalRcm from_components(NoiseSpace noise, Expression t_expr,
                                       std::vector<std::pair<std::string, Expression>> x_exprs,
                                       std::vector<std::vector<Expression>> po_exprs,
                                       std::vector<int> treatment_support);

  const NoiseSpace& noise() const;
  const std::vector<int>& treatment_support() const { return support_; }
  int covariate_dim() const { return d_; }
  int outcome_dim() const { return p_; }
  RcmProvenance provenance() const { return provenance_; }

  // The augmented structural model realizing the map (T, X, Y, all Y_t).
  const ScmModel& program() const { return program_; }
  const std::string& t_column() const { return t_col_; }
  const std::vector<std::string>& x_columns() const { return x_cols_; }
  const std::vector<std::string>& y_columns() const { return y_cols_; }  // empty: Y via consistency
  const std::vector<std::vector<std::string>>& po_columns() const { return po_cols_; }

  RcmBatch generate(const Eigen::MatrixXd& noise_values) const;
  RcmBatch generate(const NoiseBatch& batch) const { return generate(batch.values); }

private:
  FunctionalRcm(ScmModel program, std::string t_col, std::vector<std::string> x_cols,
                std::vector<std::string> y_cols, std::vector<std::vector<std::string>> po_cols,
                std::vector<int> support, RcmProvenance prov);

  ScmModel program_;
  std::string t_col_;
  std::vector<std::string> x_cols_;
  std::vector<std::string> y_cols_;
  std::vector<std::vector<std::string>> po_cols_;
  std::vector<int> support_;
  RcmProvenance provenance_;
  int d_ = 0, p_ = 0;
};

// The (T, X, Y) projection of a model or RCM, with the shared noise space.
class ObservationalView {
public:
  explicit ObservationalView(const ScmModel& model);
  explicit ObservationalView(const FunctionalRcm& rcm);

  const ScmModel& program() const { return program_; }
  const NoiseSpace& noise() const { return program_.noise(); }
  const std::string& t_column() const { return t_col_; }
  const std::vector<std::string>& x_columns() const { return x_cols_; }
  const std::vector<std::string>& y_columns() const { return y_cols_; }
  const std::vector<int>& treatment_support() const { return support_; }

  struct Sample {
    Eigen::VectorXd t;
    Eigen::MatrixXd x;
    Eigen::MatrixXd y;
  };
  Sample sample(std::uint64_t seed, long n) const;

  bool enumerable() const;
  // Exact joint law over (T, X..., Y...) with role-ordered columns.
  Law exact_joint() const;

private:
  ScmModel program_;
  std::string t_col_;
  std::vector<std::string> x_cols_;
  std::vector<std::string> y_cols_;
  std::vector<int> support_;
  std::optional<FunctionalRcm> rcm_;  // set when derived from an RCM (Y via consistency)
  friend class FunctionalRcm;
};

// Result of a verification procedure; holds iff statistic <= threshold.
struct CheckReport {
  bool holds = false;
  double statistic = 0.0;
  double threshold = 0.0;
  Engine method = Engine::MonteCarlo;
  std::vector<std::string> witnesses;
  std::vector<std::string> warnings;
};

enum class IgnorabilityMode { Single, Cross };

FunctionalRcm entailed_rcm(const ScmModel& model);

FunctionalRcm user_rcm(const ScmModel& base, const std::vector<std::vector<Expression>>& po_exprs);

// Y == Y_T on every atom (exact engine) or every draw (Monte Carlo);
// statistic is the max absolute deviation, threshold 0.
CheckReport check_consistency(const FunctionalRcm& rcm, const McBudget& budget = {},
                              Engine engine = Engine::MonteCarlo);

// Positivity of the propensity over covariate strata. statistic is the
// probability mass (or bin fraction) of strata violating the engine's
// criterion, threshold 0.
CheckReport check_positivity(const ObservationalView& obs, Engine engine,
                             const McBudget& budget = {});

// Conditional propensity P(T = t | X = x); exact and closed-form engines
// only (Monte Carlo callers should bin themselves).
double propensity(const ObservationalView& obs, int t, const Eigen::VectorXd& x, Engine engine);

// Conditional ignorability (Y_t indep T | X per t, or jointly across t).
CheckReport check_ignorability(const FunctionalRcm& rcm, IgnorabilityMode mode, Engine engine,
                               const McBudget& budget = {});

// The unique law of (T, X, Y_t) shared by every RCM over `obs` satisfying
// positivity and single-outcome ignorability.
Law identify_single_outcome(const ObservationalView& obs, int t, Engine engine,
                            const McBudget& budget = {});

// Finite structural representation: an SCM with one discrete noise carrying
// the joint law of (T, X, (Y_t)); its entailed RCM matches the input per
// atom. atom_map sends input noise atoms to constructed noise atoms.
struct StructuralRepresentation {
  ScmModel model;
  std::vector<std::size_t> atom_map;
  AtomTable input_atoms;
};

StructuralRepresentation structural_representation(const FunctionalRcm& rcm);

// Max absolute per-atom discrepancy between the input RCM and the entailed
// RCM of its structural representation (0 when the construction is exact).
double representation_roundtrip_gap(const FunctionalRcm& rcm,
                                    const StructuralRepresentation& rep);

}  // namespace cfl
