#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfl/engine.hpp"
#include "cfl/noise.hpp"
#include "cfl/rcm.hpp"
#include "cfl/scm.hpp"

namespace cfl {

// Declarative pieces of a scenario file. Equation and expectation strings
// stay symbolic until instantiation so parameter overrides re-check the same
// claims.
struct NoiseDecl {
  std::string name;
  std::string dist;  // pointmass | bernoulli | discrete | uniform | gaussian
  double c = 0.0, p = 0.5, a = 0.0, b = 1.0, mean = 0.0, var = 1.0;
  std::vector<WeightedValue> atoms;
};

struct ModelDecl {
  std::vector<NoiseDecl> noises;
  std::vector<std::pair<std::string, std::string>> equations;  // declaration order
  std::string treatment;
  std::vector<std::string> covariates;
  std::vector<std::string> outcomes;
  std::vector<int> treatment_support;
};

struct RcmDecl {
  std::string name;
  std::vector<std::vector<std::string>> po;  // po[t][i]: expression of Y_t coordinate i
};

struct Expectation {
  std::string quantity;  // cate_rcm | cate_scm | direct_effect | interventional_cate | gap
                         // | mean_po | mean_do | ate_po | ate_do | consistency | positivity
                         // | ignorability | equivalence | assumption
  std::string rcm;       // construction name; "entailed" / "outcome_equation" are built in
  std::string rcm_b = "entailed";  // second side of an equivalence
  std::string level;               // as | cross | single (equivalence)
  std::string mode;                // single | cross (ignorability)
  std::string flag;                // a5 | a6 | a7_parent | a7_descendant (assumption)
  int t = 0;                       // treatment level for mean_po / mean_do
  std::string expected;            // symbolic value over the parameters, or a verdict word
  double tolerance = 1e-9;
  std::string anchor;              // free-form provenance note
};

struct Scenario {
  std::string id;
  std::string description;
  std::map<std::string, double> parameters;
  ModelDecl model;
  std::vector<RcmDecl> rcms;
  std::vector<Expectation> expectations;

  ScmModel instantiate(const std::map<std::string, double>& overrides = {}) const;
  FunctionalRcm instantiate_rcm(const std::string& name, const ScmModel& model,
                                const std::map<std::string, double>& overrides = {}) const;
  std::map<std::string, double> merged_parameters(
      const std::map<std::string, double>& overrides) const;
};

std::vector<Scenario> builtin_scenarios();
std::optional<Scenario> find_builtin(const std::string& id);

Scenario scenario_from_json(const std::string& text, const std::string& origin);
std::string scenario_to_json(const Scenario& s);
Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& s, const std::string& path);

struct ReportRow {
  std::string estimand;
  std::string x;  // grid point ("" for unconditional rows)
  std::string computed;
  std::optional<double> se;
  std::string expected;
  double tolerance = 0.0;
  bool pass = false;
  Engine engine = Engine::LinearGaussian;
  std::string note;
};

struct Report {
  std::string scenario_id;
  std::uint64_t seed = 0;
  Engine engine = Engine::LinearGaussian;
  long n = 0;
  std::vector<ReportRow> rows;
  double wall_seconds = 0.0;

  bool all_pass() const;
  std::string to_csv() const;       // deterministic for fixed (scenario, seed, engine, n)
  std::string to_markdown() const;  // human format; includes the wall clock
};

Report run_scenario(const Scenario& s, std::uint64_t seed, Engine engine, long n,
                    const std::map<std::string, double>& param_overrides = {});

}  // namespace cfl
