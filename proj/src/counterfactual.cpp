#include <cmath>

#include "cfl/affine.hpp"
#include "cfl/errors.hpp"
#include "cfl/scm.hpp"
#include "cfl/stats.hpp"

namespace cfl {

namespace {

std::vector<int> query_columns(const ScmModel& model, const std::vector<std::string>& query) {
  std::vector<int> cols;
  for (const auto& q : query) {
    const int i = model.var_index(q);
    if (i < 0) throw UnknownReference(q);
    cols.push_back(i);
  }
  return cols;
}

Law exact_counterfactual(const ScmModel& model, const std::map<std::string, double>& evidence,
                         const Intervention& iv, const std::vector<std::string>& query) {
  AtomTable atoms;
  try {
    atoms = enumerate_noise(model.noise());
  } catch (const NotEnumerable& e) {
    throw EngineInapplicable(std::string("exact engine needs a finite noise space: ") + e.what());
  }
  const Eigen::MatrixXd solved = solve_on(model, atoms.coords);

  // Abduction: exact Bayes over the noise atoms.
  Eigen::VectorXd weights = atoms.probs;
  for (const auto& [var, val] : evidence) {
    const int col = model.var_index(var);
    if (col < 0) throw UnknownReference(var);
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      if (std::abs(solved(i, col) - val) > 1e-9) weights(i) = 0.0;
    }
  }
  const double total = weights.sum();
  if (total <= 0.0) {
    throw ZeroProbabilityEvidence("no noise atom matches the evidence");
  }
  weights /= total;

  // Action + prediction: push the posterior through the intervened model.
  const ScmModel intervened = apply_do(model, iv);
  const Eigen::MatrixXd pushed = solve_on(intervened, atoms.coords);
  const auto cols = query_columns(model, query);
  Eigen::MatrixXd coords(pushed.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    coords.col(static_cast<Eigen::Index>(j)) = pushed.col(cols[j]);
  }
  return Law::exact_table(query, std::move(coords), weights);
}

Law gaussian_counterfactual(const ScmModel& model, const std::map<std::string, double>& evidence,
                            const Intervention& iv, const std::vector<std::string>& query) {
  auto rep = mixture_rep(model);
  if (!rep) {
    throw EngineInapplicable("model is outside the linear-gaussian subclass");
  }
  std::vector<std::pair<std::string, double>> ev(evidence.begin(), evidence.end());
  const Posterior post = condition_mixture(*rep, ev);
  const ScmModel intervened = apply_do(model, iv);
  auto rep_iv = mixture_rep(intervened);
  if (!rep_iv) {
    throw EngineInapplicable("intervened model is outside the linear-gaussian subclass");
  }
  return posterior_law(*rep_iv, post, query);
}

Law mc_counterfactual(const ScmModel& model, const std::map<std::string, double>& evidence,
                      const Intervention& iv, const std::vector<std::string>& query,
                      const McBudget& budget) {
  const NoiseBatch batch = sample_noise(model.noise(), budget.seed, budget.n);
  const Eigen::MatrixXd solved = solve_on(model, batch.values);

  // Kernel rejection: accept draws within h of the evidence, where h is a
  // fraction of the per-coordinate sd (exact match for degenerate columns).
  std::vector<char> accept(static_cast<std::size_t>(budget.n), 1);
  for (const auto& [var, val] : evidence) {
    const int col = model.var_index(var);
    if (col < 0) throw UnknownReference(var);
    const Eigen::VectorXd column = solved.col(col);
    const double mean = column.mean();
    const double sd = std::sqrt((column.array() - mean).square().mean());
    const double h = budget.bandwidth_factor * sd;
    for (long i = 0; i < budget.n; ++i) {
      if (std::abs(column(i) - val) > h) accept[static_cast<std::size_t>(i)] = 0;
    }
  }
  long kept = 0;
  for (char a : accept) kept += a;
  if (kept == 0) {
    throw EmptyAcceptance("kernel rejection accepted 0 of " + std::to_string(budget.n) +
                          " draws");
  }
  Eigen::MatrixXd posterior_noise(kept, batch.values.cols());
  long r = 0;
  for (long i = 0; i < budget.n; ++i) {
    if (accept[static_cast<std::size_t>(i)]) posterior_noise.row(r++) = batch.values.row(i);
  }
  const ScmModel intervened = apply_do(model, iv);
  const Eigen::MatrixXd pushed = solve_on(intervened, posterior_noise);
  const auto cols = query_columns(model, query);
  Eigen::MatrixXd sample(kept, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    sample.col(static_cast<Eigen::Index>(j)) = pushed.col(cols[j]);
  }
  return Law::empirical(query, std::move(sample), budget.seed, "counterfactual-mc");
}

}  // namespace

Law counterfactual_law(const ScmModel& model, const std::map<std::string, double>& evidence,
                       const Intervention& iv, const std::vector<std::string>& query,
                       Engine engine, const McBudget& budget) {
  switch (engine) {
    case Engine::ExactDiscrete:
      return exact_counterfactual(model, evidence, iv, query);
    case Engine::LinearGaussian:
      return gaussian_counterfactual(model, evidence, iv, query);
    case Engine::MonteCarlo:
      return mc_counterfactual(model, evidence, iv, query, budget);
  }
  throw EngineInapplicable("unknown engine");
}

}  // namespace cfl
