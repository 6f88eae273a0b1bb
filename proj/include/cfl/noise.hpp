#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cfl/rng.hpp"

namespace cfl {

enum class DistKind { PointMass, Bernoulli, Discrete, Uniform, Gaussian };

struct WeightedValue {
  double value = 0.0;
  double prob = 0.0;
};

// One exogenous noise coordinate: a name plus a univariate distribution.
// Parameters are validated at construction; a Gaussian with variance 0
// degrades to a point mass at its mean.
class NoiseSpec {
public:
  static NoiseSpec point_mass(std::string name, double c);
  static NoiseSpec bernoulli(std::string name, double p);
  static NoiseSpec discrete(std::string name, std::vector<WeightedValue> atoms);
  static NoiseSpec uniform(std::string name, double a, double b);
  static NoiseSpec gaussian(std::string name, double mean, double variance);

  const std::string& name() const { return name_; }
  DistKind kind() const { return kind_; }
  double param_a() const { return a_; }  // c / p / lower / mean
  double param_b() const { return b_; }  // - / - / upper / variance
  const std::vector<WeightedValue>& atoms() const { return atoms_; }

  // True when the support is a finite set (PointMass, Bernoulli, Discrete,
  // or Gaussian with zero variance).
  bool finite_support() const;
  // Support atoms with positive probability; throws NotEnumerable otherwise.
  std::vector<WeightedValue> support() const;

  double mean() const;
  double variance() const;
  bool contains(double v) const;  // v lies in the support

  double sample(RngStream& rng) const;

  bool operator==(const NoiseSpec& other) const;

private:
  NoiseSpec() = default;
  std::string name_;
  DistKind kind_ = DistKind::PointMass;
  double a_ = 0.0;
  double b_ = 0.0;
  std::vector<WeightedValue> atoms_;
};

// Realizations of the noise vector: one row per draw, one column per spec.
struct NoiseBatch {
  Eigen::MatrixXd values;
  std::uint64_t seed = 0;
  std::string space_id;
};

// Finite product measure: one row of coords per atom.
struct AtomTable {
  Eigen::MatrixXd coords;
  Eigen::VectorXd probs;

  std::size_t size() const { return static_cast<std::size_t>(probs.size()); }
};

// Ordered collection of mutually independent noise coordinates.
class NoiseSpace {
public:
  NoiseSpace() = default;
  explicit NoiseSpace(std::vector<NoiseSpec> specs);

  const std::vector<NoiseSpec>& specs() const { return specs_; }
  std::size_t size() const { return specs_.size(); }
  const NoiseSpec& spec(std::size_t j) const { return specs_[j]; }
  // Index of `name`, or -1 when absent.
  int index_of(const std::string& name) const;
  bool has(const std::string& name) const { return index_of(name) >= 0; }

  // Structural identity; almost-sure couplings are only defined across
  // models sharing a space in this sense.
  std::string id() const { return id_; }
  bool operator==(const NoiseSpace& other) const { return id_ == other.id_; }

private:
  std::vector<NoiseSpec> specs_;
  std::string id_;
};

// Deterministic function of (space, seed, n). Column j is drawn from its own
// substream keyed by (seed, j), so coordinates are mutually independent and
// adding a coordinate never perturbs the others.
NoiseBatch sample_noise(const NoiseSpace& space, std::uint64_t seed, long n);

// k reproducible child seeds of `seed` (counter-keyed; see rng.hpp).
std::vector<std::uint64_t> split_stream(std::uint64_t seed, int k);

// Exact product measure over all coordinates; requires every coordinate to
// have finite support. Zero-probability atoms are dropped.
AtomTable enumerate_noise(const NoiseSpace& space);

}  // namespace cfl
