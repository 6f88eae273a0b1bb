#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfl/expression.hpp"
#include "cfl/law.hpp"
#include "cfl/noise.hpp"

namespace cfl {

class ScmModel;

// c + sum var_coef[v] * v + sum noise_coef[u] * u
struct AffineForm {
  double c = 0.0;
  std::map<std::string, double> var_coef;
  std::map<std::string, double> noise_coef;

  bool is_constant() const { return var_coef.empty() && noise_coef.empty(); }
  AffineForm& operator+=(const AffineForm& o);
  AffineForm& operator-=(const AffineForm& o);
  AffineForm& operator*=(double s);
  double coef_of_var(const std::string& v) const;
  double coef_of_noise(const std::string& u) const;
};

// Affine view of one expression. `resolve` maps a name to its affine form
// (variables to previously derived forms, noises to atom constants or to a
// unit-coefficient form). Returns nullopt when the expression falls outside
// the affine subclass (indicator/min/max/table over non-constant inputs).
std::optional<AffineForm> to_affine(
    const Expression& e,
    const std::function<std::optional<AffineForm>(const std::string&)>& resolve);

// Affine view of a single equation keeping parent variables symbolic.
std::optional<AffineForm> equation_affine(const ScmModel& model, const std::string& var);

// One assignment of the referenced discrete noises, with the endogenous
// variables expressed as affine functions of the continuous noises.
struct MixtureComponent {
  std::string label;
  double prob = 0.0;
  std::vector<double> discrete_values;         // aligned with MixtureRep::disc_noises
  std::vector<AffineForm> vars;                // aligned with model variable order
};

// Per-atom affine representation of a model: the "linear Gaussian" subclass.
// Continuous noises must be Gaussian or point masses. Every discrete noise of
// the space is enumerated into components (referenced or not), so two models
// over one space always share component labels and continuous-noise indexing.
struct MixtureRep {
  std::vector<std::string> variables;   // declaration order
  std::vector<std::string> cont_noises;
  Eigen::VectorXd cont_mean;
  Eigen::VectorXd cont_var;             // zero for point masses
  std::vector<std::string> disc_noises;
  std::vector<MixtureComponent> components;

  int var_index(const std::string& name) const;
  int cont_index(const std::string& name) const;

  // Prior mean of a variable.
  double mean_of(const std::string& var) const;
  // Joint law of the given variables as a Gaussian mixture.
  Law marginal_law(const std::vector<std::string>& vars) const;
};

// nullopt when the model is outside the subclass (a Uniform noise, an
// indicator/min/max/table that stays non-constant after atom substitution,
// or too many discrete atoms).
std::optional<MixtureRep> mixture_rep(const ScmModel& model, std::size_t max_components = 4096);

// Posterior over components and continuous noises given exact evidence on
// endogenous variables. Evidence on per-component-constant variables filters
// components; evidence with noise terms conditions the Gaussian prior.
struct PosteriorComponent {
  std::string label;
  double weight = 0.0;
  std::size_t component;   // index into MixtureRep::components
  Eigen::VectorXd mean;    // posterior mean of continuous noises
  Eigen::MatrixXd cov;     // posterior covariance
};

struct Posterior {
  std::vector<PosteriorComponent> components;
};

// Throws ZeroProbabilityEvidence when no component is compatible and
// EngineInapplicable when evidence densities are not comparable across
// components (different constraint ranks).
Posterior condition_mixture(const MixtureRep& rep,
                            const std::vector<std::pair<std::string, double>>& evidence);

// Law of query variables under a posterior, pushing each posterior component
// through affine forms (typically of an intervened model sharing the same
// noise space and component enumeration).
Law posterior_law(const MixtureRep& pushforward_rep, const Posterior& posterior,
                  const std::vector<std::string>& query);

}  // namespace cfl
