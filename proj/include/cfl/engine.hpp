#pragma once

#include <cstdint>
#include <string>

namespace cfl {

// Computation backends. ExactDiscrete enumerates finite noise spaces,
// LinearGaussian handles per-atom affine models with Gaussian/point-mass
// continuous noises in closed form, MonteCarlo samples.
enum class Engine { ExactDiscrete, LinearGaussian, MonteCarlo };

inline const char* engine_name(Engine e) {
  switch (e) {
    case Engine::ExactDiscrete:
      return "exact";
    case Engine::LinearGaussian:
      return "gaussian";
    case Engine::MonteCarlo:
      return "mc";
  }
  return "?";
}

// Resource knobs for Monte-Carlo evaluation and permutation testing.
struct McBudget {
  long n = 100000;               // draws
  std::uint64_t seed = 1;        // master seed; substreams derived internally
  int permutations = 200;        // permutation-test replicates
  int max_pairwise = 1024;       // per-sample cap for O(n^2) statistics
  double bandwidth_factor = 0.1; // kernel window as a fraction of per-coordinate sd
  double significance = 0.01;    // rejection level for statistical verdicts
};

}  // namespace cfl
