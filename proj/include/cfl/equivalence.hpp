#pragma once

#include <map>
#include <optional>
#include <string>

#include "cfl/engine.hpp"
#include "cfl/rcm.hpp"

namespace cfl {

enum class EquivalenceLevel { AlmostSure, CrossOutcome, SingleOutcome };
enum class Verdict { Equal, NotEqual, Inconclusive };

struct EquivalenceVerdict {
  EquivalenceLevel level = EquivalenceLevel::AlmostSure;
  Verdict verdict = Verdict::Inconclusive;
  double statistic = 0.0;
  double threshold = 0.0;
  std::optional<double> p_value;
  std::string witness;                     // exact backends: a violating draw/atom
  std::map<int, double> per_t_detail;      // single-outcome level: statistic per t
};

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Equal:
      return "Equal";
    case Verdict::NotEqual:
      return "NotEqual";
    case Verdict::Inconclusive:
      return "Inconclusive";
  }
  return "?";
}

// Y_t^(a) == Y_t^(b) almost surely, checked per atom (enumerable spaces) or
// on coupled draws. Only defined when both models share one noise space.
EquivalenceVerdict compare_almost_sure(const FunctionalRcm& a, const FunctionalRcm& b,
                                       const McBudget& budget = {}, double tol = 0.0);

// Equality of the full joint laws L(T, X, (Y_t)_t).
EquivalenceVerdict compare_cross_outcome(const FunctionalRcm& a, const FunctionalRcm& b,
                                         const McBudget& budget = {});

// Equality of L(T, X, Y_t) for every t, with a per-t detail table.
EquivalenceVerdict compare_single_outcome(const FunctionalRcm& a, const FunctionalRcm& b,
                                          const McBudget& budget = {});

}  // namespace cfl
