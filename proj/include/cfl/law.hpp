#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cfl/engine.hpp"

namespace cfl {

// Finite-support law: one row of coordinates per atom.
struct ExactTableRep {
  Eigen::MatrixXd coords;
  Eigen::VectorXd probs;
};

// One component of a finite Gaussian mixture. Labels identify components
// across two laws built from the same discrete-noise enumeration.
struct GaussComponent {
  std::string label;
  double weight = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct GaussianMixtureRep {
  std::vector<GaussComponent> components;
};

// Sample-backed law with seed provenance.
struct EmpiricalRep {
  Eigen::MatrixXd sample;
  std::uint64_t seed = 0;
  std::string generator_id;
};

// A represented probability law on R^k.
class Law {
public:
  static Law exact_table(std::vector<std::string> dims, Eigen::MatrixXd coords,
                         Eigen::VectorXd probs);
  static Law gaussian_mixture(std::vector<std::string> dims, std::vector<GaussComponent> comps);
  static Law empirical(std::vector<std::string> dims, Eigen::MatrixXd sample, std::uint64_t seed,
                       std::string generator_id);

  int dimension() const { return static_cast<int>(dims_.size()); }
  const std::vector<std::string>& dims() const { return dims_; }

  bool is_exact() const { return std::holds_alternative<ExactTableRep>(rep_); }
  bool is_gaussian() const { return std::holds_alternative<GaussianMixtureRep>(rep_); }
  bool is_empirical() const { return std::holds_alternative<EmpiricalRep>(rep_); }

  const ExactTableRep& table() const { return std::get<ExactTableRep>(rep_); }
  const GaussianMixtureRep& mixture() const { return std::get<GaussianMixtureRep>(rep_); }
  const EmpiricalRep& empirical_rep() const { return std::get<EmpiricalRep>(rep_); }

  Eigen::VectorXd mean() const;

  // Projection onto a subset of coordinates.
  Law marginal(const std::vector<int>& coords) const;

  // Deterministic sample representation (pass-through for empirical laws,
  // seeded quantile/atom expansion otherwise); used by statistical comparisons.
  Eigen::MatrixXd pseudo_sample(long n, std::uint64_t seed) const;

private:
  std::vector<std::string> dims_;
  std::variant<ExactTableRep, GaussianMixtureRep, EmpiricalRep> rep_;
};

struct LawDistanceResult {
  double statistic = 0.0;
  std::optional<double> p_value;
};

// Exact total variation for table pairs, component-wise discrepancy for
// label-matched Gaussian mixtures, energy distance with a permutation
// p-value whenever an empirical representation is involved.
LawDistanceResult law_distance(const Law& a, const Law& b, const McBudget& budget = {});

}  // namespace cfl
