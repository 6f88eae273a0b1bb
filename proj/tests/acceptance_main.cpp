// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances and thresholds are pinned in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <vector>

#include "cfl/equivalence.hpp"
#include "cfl/errors.hpp"
#include "cfl/estimands.hpp"
#include "cfl/scenario.hpp"
#include "cfl/stats.hpp"
#include "generators.hpp"
#include "models.hpp"

using namespace cfl;
using namespace cfl_tests;

namespace {

struct Criterion {
  int id;
  std::string summary;
  std::function<bool(std::string&)> body;
};

Eigen::VectorXd x1(double v) {
  Eigen::VectorXd x(1);
  x(0) = v;
  return x;
}

bool row_passes(const Report& rep, const std::string& estimand, std::string& detail) {
  bool found = false;
  for (const auto& r : rep.rows) {
    if (r.estimand.rfind(estimand, 0) != 0) continue;
    found = true;
    if (!r.pass) {
      detail += " [" + r.estimand + " computed " + r.computed + " expected " + r.expected + "]";
      return false;
    }
  }
  if (!found) {
    detail += " [no row for " + estimand + "]";
    return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

bool criterion1(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  const Scenario s = *find_builtin("motivating");
  const Report rep = run_scenario(s, 1, Engine::LinearGaussian, 50000);
  bool ok = row_passes(rep, "cate_rcm", detail) && row_passes(rep, "cate_scm", detail);
  int grid_rows = 0;
  for (const auto& r : rep.rows) {
    if (r.estimand == "cate_rcm") {
      ++grid_rows;
      ok = ok && std::abs(std::stod(r.computed) - 2.0) <= 1e-9;
    }
    if (r.estimand == "cate_scm") ok = ok && std::abs(std::stod(r.computed) - 3.0) <= 1e-9;
  }
  if (grid_rows != 9) {
    detail += " [expected a 9-point grid, saw " + std::to_string(grid_rows) + "]";
    ok = false;
  }

  // Monte-Carlo engine at n = 1e6, 4-se bands on the same grid.
  const ScmModel m = s.instantiate();
  const ObservationalView obs(m);
  const auto grid = covariate_grid(obs);
  McBudget budget;
  budget.n = 1000000;
  budget.seed = 11;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    McBudget b = budget;
    b.seed = stream_key(budget.seed, g);
    const auto r1 = cate_rcm(obs, grid[g], Engine::MonteCarlo, b);
    const auto r2 = cate_scm(m, grid[g], Engine::MonteCarlo, b);
    if (std::abs(r1.value - 2.0) > 4.0 * *r1.standard_error) {
      detail += " [mc cate_rcm off at grid " + std::to_string(g) + "]";
      ok = false;
    }
    if (std::abs(r2.value - 3.0) > 4.0 * *r2.standard_error) {
      detail += " [mc cate_scm off at grid " + std::to_string(g) + "]";
      ok = false;
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char buf[64];
  std::snprintf(buf, sizeof(buf), " (%.1f s)", secs);
  detail += buf;
  if (secs >= 10.0) {
    detail += " [runtime above 10 s]";
    ok = false;
  }
  return ok;
}

bool criterion2(std::string& detail) {
  const ScmModel m = prop2_model();
  const ObservationalView obs(m);
  bool ok = true;

  const double expected_po[2] = {0.5, 1.5};
  const double expected_do[2] = {0.0, 2.0};
  for (int t = 0; t <= 1; ++t) {
    const Law ident = identify_single_outcome(obs, t, Engine::LinearGaussian);
    if (std::abs(ident.mean()(2) - expected_po[t]) > 1e-9) {
      detail += " [analytic E[Y_" + std::to_string(t) + "] off]";
      ok = false;
    }
    const Law done = counterfactual_law(m, {}, Intervention::on("T", static_cast<double>(t)),
                                        {"Y"}, Engine::LinearGaussian);
    if (std::abs(done.mean()(0) - expected_do[t]) > 1e-9) {
      detail += " [analytic E[Y_{T=" + std::to_string(t) + "}] off]";
      ok = false;
    }

    McBudget budget;
    budget.n = 1000000;
    budget.seed = stream_key(21, static_cast<std::uint64_t>(t));
    const Law ident_mc = identify_single_outcome(obs, t, Engine::MonteCarlo, budget);
    const auto& sample = ident_mc.empirical_rep().sample;
    const Eigen::VectorXd col = sample.col(sample.cols() - 1);
    const double mean = col.mean();
    const double se = std::sqrt((col.array() - mean).square().sum() /
                                (static_cast<double>(col.size()) * (col.size() - 1.0)));
    if (std::abs(mean - expected_po[t]) > 4.0 * se) {
      detail += " [mc E[Y_" + std::to_string(t) + "] off by " +
                std::to_string(mean - expected_po[t]) + "]";
      ok = false;
    }
    const ScmModel m_t = apply_do(m, Intervention::on("T", static_cast<double>(t)));
    const NoiseBatch batch = sample_noise(m.noise(), stream_key(22, t), 1000000);
    const Eigen::VectorXd y = solve(m_t, batch).col(m.var_index("Y"));
    const double dm = y.mean();
    const double dse = std::sqrt((y.array() - dm).square().sum() /
                                 (static_cast<double>(y.size()) * (y.size() - 1.0)));
    if (std::abs(dm - expected_do[t]) > 4.0 * dse) {
      detail += " [mc E[Y_{T=" + std::to_string(t) + "}] off]";
      ok = false;
    }
  }
  return ok;
}

bool criterion3(std::string& detail) {
  const Scenario s = *find_builtin("prop2");
  const ScmModel m = s.instantiate();
  // n chosen so each treatment stratum carries ~1e5 draws.
  McBudget budget;
  budget.n = 200000;
  budget.seed = 31;
  bool ok = true;

  const FunctionalRcm cross_rcm = s.instantiate_rcm("cross_construction", m);
  const FunctionalRcm single_rcm = s.instantiate_rcm("single_construction", m);

  const CheckReport c1 =
      check_ignorability(cross_rcm, IgnorabilityMode::Cross, Engine::MonteCarlo, budget);
  if (!c1.holds) {
    detail += " [first construction failed cross-outcome ignorability]";
    ok = false;
  }
  const CheckReport c2 =
      check_ignorability(single_rcm, IgnorabilityMode::Single, Engine::MonteCarlo, budget);
  if (!c2.holds) {
    detail += " [modified construction failed single-outcome ignorability]";
    ok = false;
  }
  const CheckReport c3 =
      check_ignorability(single_rcm, IgnorabilityMode::Cross, Engine::MonteCarlo, budget);
  if (c3.holds) {
    detail += " [modified construction passed cross-outcome ignorability]";
    ok = false;
  }
  // Determinism under the fixed seed.
  const CheckReport c1b =
      check_ignorability(cross_rcm, IgnorabilityMode::Cross, Engine::MonteCarlo, budget);
  if (c1.holds != c1b.holds || c1.statistic != c1b.statistic) {
    detail += " [verdicts not deterministic]";
    ok = false;
  }
  return ok;
}

bool criterion4(std::string& detail) {
  bool ok = true;
  for (const char* id : {"remark4", "cor1"}) {
    const Scenario s = *find_builtin(id);
    const ScmModel m = s.instantiate();
    const FunctionalRcm a = s.instantiate_rcm(s.rcms.front().name, m);
    const FunctionalRcm b =
        std::string(id) == "remark4" ? FunctionalRcm::outcome_equation(m) : entailed_rcm(m);
    McBudget budget;
    budget.seed = 41;
    const EquivalenceVerdict single = compare_single_outcome(a, b, budget);
    const EquivalenceVerdict cross = compare_cross_outcome(a, b, budget);
    if (single.verdict != Verdict::Equal) {
      detail += std::string(" [") + id + ": single-outcome not Equal]";
      ok = false;
    }
    if (cross.verdict != Verdict::NotEqual) {
      detail += std::string(" [") + id + ": cross-outcome not NotEqual]";
      ok = false;
    }

    // Witness statistic: L(Y1 - Y0) under the construction vs the Dirac mass
    // at 1, at n = 1e5, p < 0.01.
    const NoiseBatch batch = sample_noise(a.noise(), 42, 100000);
    const RcmBatch rb = a.generate(batch.values);
    Eigen::MatrixXd diff(rb.t.size(), 1);
    diff.col(0) = rb.y_t[1].col(0) - rb.y_t[0].col(0);
    const Law law_diff = Law::empirical({"y1-y0"}, std::move(diff), 42, id);
    Eigen::MatrixXd dirac(1, 1);
    dirac << 1.0;
    Eigen::VectorXd one(1);
    one << 1.0;
    const Law delta1 = Law::exact_table({"y1-y0"}, dirac, one);
    McBudget wb;
    wb.n = 100000;
    wb.seed = 43;
    const auto dist = law_distance(law_diff, delta1, wb);
    if (!dist.p_value || *dist.p_value >= 0.01) {
      detail += std::string(" [") + id + ": witness p-value not below 0.01]";
      ok = false;
    }
  }
  return ok;
}

bool criterion5(std::string& detail) {
  bool ok = true;
  const std::vector<std::array<double, 3>> triples{
      {1.0, -1.0, -1.0}, {0.5, -2.0, -0.5}, {2.0, 1.0, -0.25}};
  for (const auto& triple : triples) {
    const double a = triple[0], b = triple[1], g = triple[2];
    const ScmModel m = smoking(a, b, g);
    const ObservationalView obs(m);
    const auto grid = covariate_grid(obs);
    for (const auto& x : grid) {
      if (std::abs(cate_rcm(obs, x, Engine::LinearGaussian).value - b) > 1e-9 ||
          std::abs(cate_scm(m, x, Engine::LinearGaussian).value - (-a + b)) > 1e-9) {
        detail += " [linear values off for a triple]";
        ok = false;
        break;
      }
    }
  }
  // Monte Carlo at the defaults within 4 se.
  const ScmModel m = smoking();
  const ObservationalView obs(m);
  McBudget budget;
  budget.n = 1000000;
  budget.seed = 51;
  Eigen::VectorXd x(2);
  x << 0.3, 0.1;
  const auto r1 = cate_rcm(obs, x, Engine::MonteCarlo, budget);
  if (std::abs(r1.value - (-1.0)) > 4.0 * *r1.standard_error) {
    detail += " [mc cate_rcm off]";
    ok = false;
  }
  const auto r2 = cate_scm(m, x, Engine::MonteCarlo, budget);
  if (std::abs(r2.value - (-2.0)) > 4.0 * *r2.standard_error) {
    detail += " [mc cate_scm off]";
    ok = false;
  }
  return ok;
}

bool criterion6(std::string& detail) {
  const ScmModel m = motivating(1.0, 2.0);
  const FunctionalRcm entailed = entailed_rcm(m);
  bool ok = true;
  for (double y : {1.0, -1.0, 0.5}) {
    const std::map<std::string, double> params{{"y", y}, {"ab", 3.0}};
    const FunctionalRcm shifted = user_rcm(
        m, {{Expression::parse("(1-T)*Y + T*(U_X + U_Y + y)", params)},
            {Expression::parse("T*Y + (1-T)*(ab + U_X + U_Y + y)", params)}});
    McBudget budget;
    budget.n = 100000;
    budget.seed = 61;
    const EquivalenceVerdict as = compare_almost_sure(shifted, entailed, budget);
    const EquivalenceVerdict cross = compare_cross_outcome(shifted, entailed, budget);
    const EquivalenceVerdict single = compare_single_outcome(shifted, entailed, budget);
    if (as.verdict != Verdict::NotEqual || as.witness.empty() ||
        std::abs(as.statistic - std::abs(y)) > 1e-9) {
      detail += " [almost-sure verdict or witness wrong for y=" + std::to_string(y) + "]";
      ok = false;
    }
    if (cross.verdict != Verdict::NotEqual || single.verdict != Verdict::NotEqual) {
      detail += " [law-level verdicts wrong for y=" + std::to_string(y) + "]";
      ok = false;
    }
  }
  return ok;
}

bool criterion7(std::string& detail) {
  // Part one: identify vs theorem-1 law, statistically, on 50 random models
  // satisfying positivity plus the outcome/noise conditions.
  int agree = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const ScmModel m = random_linear_model(stream_key(71, seed), false);
    const ObservationalView obs(m);
    bool model_ok = true;
    for (int t = 0; t <= 1; ++t) {
      McBudget bi;
      bi.n = 20000;
      bi.seed = stream_key(72, seed * 2 + static_cast<std::uint64_t>(t));
      bi.max_pairwise = 256;
      bi.permutations = 199;
      const Law ident = identify_single_outcome(obs, t, Engine::MonteCarlo, bi);
      McBudget bt = bi;
      bt.seed = stream_key(73, seed * 2 + static_cast<std::uint64_t>(t));
      const Law theo = theorem1_law(m, t, Engine::MonteCarlo, bt);
      const auto dist = law_distance(ident, theo, bi);
      if (dist.p_value && *dist.p_value < 0.01) model_ok = false;
    }
    if (model_ok) ++agree;
  }
  bool ok = true;
  detail += " [identify~theorem1 agree " + std::to_string(agree) + "/50]";
  if (agree < 48) ok = false;

  // Part two: with no posttreatment covariate the two CATEs coincide exactly
  // under the symbolic engine.
  int exact_equal = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const ScmModel m = random_linear_model(stream_key(74, seed), true);
    const ObservationalView obs(m);
    Eigen::VectorXd x = covariate_grid(obs, 3)[1];
    const double rcm_value = cate_rcm(obs, x, Engine::LinearGaussian).value;
    const double scm_value = cate_scm(m, x, Engine::LinearGaussian).value;
    if (rcm_value == scm_value) ++exact_equal;
  }
  detail += " [cate_rcm==cate_scm " + std::to_string(exact_equal) + "/50]";
  if (exact_equal != 50) ok = false;
  return ok;
}

bool criterion8(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const ScmModel m = random_acyclic_model(stream_key(81, seed), 8);
    McBudget budget;
    budget.n = 10000;
    budget.seed = stream_key(82, seed);
    const CheckReport rep = check_consistency(entailed_rcm(m), budget);
    if (!rep.holds || rep.statistic != 0.0) {
      detail += " [model " + std::to_string(seed) + " violated consistency]";
      ok = false;
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char buf[64];
  std::snprintf(buf, sizeof(buf), " (%.1f s)", secs);
  detail += buf;
  if (secs >= 60.0) {
    detail += " [runtime above 60 s]";
    ok = false;
  }
  return ok;
}

bool criterion9(std::string& detail) {
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const FunctionalRcm rcm = random_finite_rcm(stream_key(91, seed));
    if (enumerate_noise(rcm.noise()).size() > 64) {
      detail += " [generator produced more than 64 atoms]";
      ok = false;
    }
    const StructuralRepresentation rep = structural_representation(rcm);
    const double gap = representation_roundtrip_gap(rcm, rep);
    if (gap != 0.0) {
      detail += " [roundtrip gap " + std::to_string(gap) + " at seed " + std::to_string(seed) +
                "]";
      ok = false;
    }
  }
  return ok;
}

bool criterion10(std::string& detail) {
  const ScmModel m = remark8_model(1.0, 2.0);
  const ObservationalView obs(m);
  bool ok = true;
  const auto grid = covariate_grid(obs);
  for (const auto& x : grid) {
    const double gap = relaxed_noise_cate_gap(m, x, Engine::LinearGaussian).value;
    const double rcm_value = cate_rcm(obs, x, Engine::LinearGaussian).value;
    if (std::abs(gap - (-1.0)) > 1e-9) {
      detail += " [linear gap off]";
      ok = false;
    }
    // cate_rcm = beta + gap = beta - alpha, checked against the direct route.
    if (std::abs(rcm_value - (2.0 + gap)) > 1e-9 || std::abs(rcm_value - 1.0) > 1e-9) {
      detail += " [decomposition broken]";
      ok = false;
    }
  }
  McBudget budget;
  budget.n = 1000000;
  budget.seed = 101;
  const auto mc_gap = relaxed_noise_cate_gap(m, x1(0.5), Engine::MonteCarlo, budget);
  if (std::abs(mc_gap.value - (-1.0)) > 4.0 * *mc_gap.standard_error) {
    detail += " [mc gap off by " + std::to_string(mc_gap.value + 1.0) + "]";
    ok = false;
  }
  const auto mc_cate = cate_rcm(obs, x1(0.5), Engine::MonteCarlo, budget);
  if (std::abs(mc_cate.value - 1.0) > 4.0 * *mc_cate.standard_error) {
    detail += " [mc cate_rcm off by " + std::to_string(mc_cate.value - 1.0) + "]";
    ok = false;
  }
  return ok;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "motivating example: direct 2 vs total 3 on the grid, mc within 4se, under 10 s",
       criterion1},
      {2, "prop2 means: E[Y0]=0.5, E[Y1]=1.5, E[Y_{T=0}]=0, E[Y_{T=1}]=2", criterion2},
      {3, "prop2 ignorability verdicts at 1e5 per stratum, deterministic", criterion3},
      {4, "remark4/cor1 split: single Equal, cross NotEqual, witness p < 0.01", criterion4},
      {5, "smoking model: cate_rcm=beta, cate_scm=-alpha+beta over three triples", criterion5},
      {6, "prop1: NotEqual at all three levels with exact per-draw witnesses", criterion6},
      {7, "theorem-1 property suite over random linear models", criterion7},
      {8, "entailed consistency exact on 100 random acyclic models", criterion8},
      {9, "structural representation round-trip on 25 finite RCMs", criterion9},
      {10, "relaxed-noise gap: -alpha exactly and within 4se", criterion10},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.body(detail);
    } catch (const std::exception& e) {
      detail += std::string(" [exception: ") + e.what() + "]";
    }
    if (!ok) ++failures;
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.summary << detail
              << "\n";
    std::cout.flush();
  }
  if (failures > 0) {
    std::cout << failures << " criteria failed\n";
    return 1;
  }
  std::cout << "all 10 criteria pass\n";
  return 0;
}
