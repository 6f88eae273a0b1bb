#include <doctest.h>

#include <cmath>

#include "cfl/errors.hpp"
#include "cfl/scm.hpp"
#include "models.hpp"

using namespace cfl;
using namespace cfl_tests;

namespace {

Eigen::MatrixXd one_row(std::initializer_list<double> vals) {
  Eigen::MatrixXd m(1, static_cast<Eigen::Index>(vals.size()));
  Eigen::Index j = 0;
  for (double v : vals) m(0, j++) = v;
  return m;
}

}  // namespace

TEST_SUITE("scm") {
  TEST_CASE("validate returns the topological order of a chain") {
    std::vector<std::pair<std::string, Expression>> eqs;
    eqs.emplace_back("Y", Expression::parse("X + U_Y"));
    eqs.emplace_back("X", Expression::parse("T + U_X"));
    eqs.emplace_back("T", Expression::parse("U_T"));
    NoiseSpace noise({NoiseSpec::bernoulli("U_T", 0.5), NoiseSpec::gaussian("U_X", 0, 1),
                      NoiseSpec::gaussian("U_Y", 0, 1)});
    const ScmModel m(std::move(eqs), std::move(noise), {"T", {"X"}, {"Y"}, {0, 1}});
    CHECK(validate(m) == std::vector<std::string>{"T", "X", "Y"});
  }

  TEST_CASE("motivating model validates to [T, X, Y]") {
    CHECK(validate(motivating()) == std::vector<std::string>{"T", "X", "Y"});
  }

  TEST_CASE("cyclic models are rejected with a witness cycle") {
    std::vector<std::pair<std::string, Expression>> eqs;
    eqs.emplace_back("X", Expression::parse("Y + U_X"));
    eqs.emplace_back("Y", Expression::parse("X + U_Y"));
    NoiseSpace noise({NoiseSpec::gaussian("U_X", 0, 1), NoiseSpec::gaussian("U_Y", 0, 1)});
    try {
      ScmModel m(std::move(eqs), std::move(noise), {});
      FAIL("expected CyclicGraph");
    } catch (const CyclicGraph& e) {
      CHECK(e.cycle().size() == 2);
    }
  }

  TEST_CASE("unknown references are rejected") {
    std::vector<std::pair<std::string, Expression>> eqs;
    eqs.emplace_back("X", Expression::parse("Z + U_X"));
    NoiseSpace noise({NoiseSpec::gaussian("U_X", 0, 1)});
    CHECK_THROWS_AS(ScmModel(std::move(eqs), std::move(noise), {}), UnknownReference);
  }

  TEST_CASE("solve substitutes draws through the motivating model") {
    const ScmModel m = motivating(1.0, 2.0);
    // (U_T, U_X, U_Y) = (1, 0.2, 0): T=1, X=1.2, Y = 1.2 + 2 = 3.2.
    const Eigen::MatrixXd out = solve_on(m, one_row({1.0, 0.2, 0.0}));
    CHECK(out(0, m.var_index("T")) == 1.0);
    CHECK(out(0, m.var_index("X")) == doctest::Approx(1.2).epsilon(1e-12));
    CHECK(out(0, m.var_index("Y")) == doctest::Approx(3.2).epsilon(1e-12));
  }

  TEST_CASE("solve substitutes draws through the prop2 model") {
    const ScmModel m = prop2_model();
    const Eigen::MatrixXd out = solve_on(m, one_row({0.0, 0.5, -0.1}));
    CHECK(out(0, m.var_index("T")) == 0.0);
    CHECK(out(0, m.var_index("X")) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out(0, m.var_index("Y")) == doctest::Approx(0.4).epsilon(1e-12));
  }

  TEST_CASE("point-mass noises give constant solutions") {
    std::vector<std::pair<std::string, Expression>> eqs;
    eqs.emplace_back("T", Expression::parse("U_T"));
    eqs.emplace_back("Y", Expression::parse("2*T + U_Y"));
    NoiseSpace noise({NoiseSpec::point_mass("U_T", 1.0), NoiseSpec::point_mass("U_Y", 0.5)});
    const ScmModel m(std::move(eqs), std::move(noise), {"T", {}, {"Y"}, {0, 1}});
    const Eigen::MatrixXd solved = solve(m, sample_noise(m.noise(), 3, 50));
    CHECK((solved.col(1).array() == 2.5).all());
  }

  TEST_CASE("apply_do fixes values and preserves the rest") {
    const ScmModel m = motivating(1.0, 2.0);
    const ScmModel m1 = apply_do(m, Intervention::on("T", 1.0));
    const NoiseBatch batch = sample_noise(m.noise(), 99, 2000);
    const Eigen::MatrixXd base = solve(m, batch);
    const Eigen::MatrixXd done = solve(m1, batch);
    // Y_{T=1} = (alpha+beta) + U_X + U_Y per draw.
    for (int i = 0; i < 2000; ++i) {
      CHECK(done(i, m.var_index("T")) == 1.0);
      const double expect = 3.0 + batch.values(i, 1) + batch.values(i, 2);
      CHECK(done(i, m.var_index("Y")) == doctest::Approx(expect).epsilon(1e-12));
    }
    // Coupled-worlds consistency: on draws where T already equals 1, the
    // intervened world coincides with the factual one.
    for (int i = 0; i < 2000; ++i) {
      if (base(i, m.var_index("T")) == 1.0) {
        CHECK(base(i, m.var_index("Y")) == done(i, m.var_index("Y")));
        CHECK(base(i, m.var_index("X")) == done(i, m.var_index("X")));
      }
    }
  }

  TEST_CASE("joint do on treatment and covariate") {
    const ScmModel m = motivating(1.0, 2.0);
    const ScmModel mj = apply_do(m, Intervention::on("T", 1.0).and_on("X", 0.7));
    const NoiseBatch batch = sample_noise(m.noise(), 4, 500);
    const Eigen::MatrixXd out = solve(mj, batch);
    for (int i = 0; i < 500; ++i) {
      const double expect = 0.7 + 2.0 + batch.values(i, 2);
      CHECK(out(i, m.var_index("Y")) == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  TEST_CASE("intervention idempotence and order invariance") {
    const ScmModel m = motivating();
    const Intervention iv = Intervention::on("T", 1.0);
    const ScmModel once = apply_do(m, iv);
    const ScmModel twice = apply_do(once, iv);
    for (const auto& v : m.variables()) {
      CHECK(once.equation(v).to_string() == twice.equation(v).to_string());
    }
    const ScmModel split = apply_do(apply_do(m, Intervention::on("T", 1.0)),
                                    Intervention::on("X", 0.5));
    const ScmModel joint = apply_do(m, Intervention::on("T", 1.0).and_on("X", 0.5));
    for (const auto& v : m.variables()) {
      CHECK(split.equation(v).to_string() == joint.equation(v).to_string());
    }
  }

  TEST_CASE("do outside the treatment support is rejected") {
    const ScmModel m = motivating();
    CHECK_THROWS_AS(apply_do(m, Intervention::on("T", 0.5)), ValidationError);
    CHECK_THROWS_AS(apply_do(m, Intervention::on("Q", 1.0)), UnknownReference);
  }

  TEST_CASE("vectorize reproduces the solved values and accepts constants") {
    const ScmModel m = motivating(1.0, 2.0);
    const VectorizedMap f = vectorize(m, {"T"});
    CHECK(f.outputs() == std::vector<std::string>{"X", "Y"});
    // f(t, U_X, U_Y): X = alpha t + U_X, Y = (alpha+beta) t + U_X + U_Y.
    const auto out = f({{"T", 1.0}}, {{"U_X", 0.5}, {"U_Y", -0.25}});
    CHECK(out.at("X") == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(out.at("Y") == doctest::Approx(3.25).epsilon(1e-12));

    // Self-consistency: feeding the solved T reproduces solve exactly.
    const NoiseBatch batch = sample_noise(m.noise(), 21, 10000);
    const Eigen::MatrixXd solved = solve(m, batch);
    double max_diff = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const auto row = f({{"T", solved(i, m.var_index("T"))}},
                         {{"U_X", batch.values(i, 1)}, {"U_Y", batch.values(i, 2)}});
      max_diff = std::max(max_diff, std::abs(row.at("X") - solved(i, m.var_index("X"))));
      max_diff = std::max(max_diff, std::abs(row.at("Y") - solved(i, m.var_index("Y"))));
    }
    CHECK(max_diff == 0.0);
  }

  TEST_CASE("vectorize with every variable intervened is empty") {
    const ScmModel m = motivating();
    const VectorizedMap f = vectorize(m, {"T", "X", "Y"});
    CHECK(f.outputs().empty());
    CHECK(f({}, {}).empty());
  }

  TEST_CASE("assumption flags for the reference models") {
    const AssumptionFlags cor1 = check_assumptions(cor1_model());
    CHECK(cor1.outcome_a5);
    CHECK(cor1.indep_noises_a6);
    CHECK(cor1.no_posttreatment_a7_parent);
    CHECK(cor1.no_posttreatment_a7_descendant);

    const AssumptionFlags mot = check_assumptions(motivating());
    CHECK(mot.outcome_a5);
    CHECK(mot.indep_noises_a6);
    CHECK_FALSE(mot.no_posttreatment_a7_parent);
    CHECK_FALSE(mot.no_posttreatment_a7_descendant);

    const AssumptionFlags smoke = check_assumptions(smoking());
    CHECK(smoke.outcome_a5);
    CHECK(smoke.indep_noises_a6);
    CHECK_FALSE(smoke.no_posttreatment_a7_parent);
    CHECK_FALSE(smoke.no_posttreatment_a7_descendant);

    const AssumptionFlags rel = check_assumptions(remark8_model());
    CHECK_FALSE(rel.indep_noises_a6);
  }

  TEST_CASE("parent and descendant forms of the posttreatment check differ") {
    // T -> M -> X: T is not a parent of X but X descends from T.
    std::vector<std::pair<std::string, Expression>> eqs;
    eqs.emplace_back("T", Expression::parse("U_T"));
    eqs.emplace_back("M", Expression::parse("T + U_M"));
    eqs.emplace_back("X", Expression::parse("M + U_X"));
    eqs.emplace_back("Y", Expression::parse("X + T + U_Y"));
    NoiseSpace noise({NoiseSpec::bernoulli("U_T", 0.5), NoiseSpec::gaussian("U_M", 0, 1),
                      NoiseSpec::gaussian("U_X", 0, 1), NoiseSpec::gaussian("U_Y", 0, 1)});
    const ScmModel m(std::move(eqs), std::move(noise), {"T", {"X"}, {"Y"}, {0, 1}});
    const AssumptionFlags flags = check_assumptions(m);
    CHECK(flags.no_posttreatment_a7_parent);
    CHECK_FALSE(flags.no_posttreatment_a7_descendant);
  }

  TEST_CASE("assumption flags ignore equation constants") {
    const AssumptionFlags a = check_assumptions(motivating(1.0, 2.0));
    const AssumptionFlags b = check_assumptions(motivating(-3.0, 0.25));
    CHECK(a.outcome_a5 == b.outcome_a5);
    CHECK(a.indep_noises_a6 == b.indep_noises_a6);
    CHECK(a.no_posttreatment_a7_parent == b.no_posttreatment_a7_parent);
    CHECK(a.no_posttreatment_a7_descendant == b.no_posttreatment_a7_descendant);
  }

  TEST_CASE("outcome-equation intervention touches only outcome equations") {
    const ScmModel m = motivating(1.0, 2.0);
    const ScmModel oe = outcome_equation_intervention(m, 1.0);
    CHECK(oe.equation("T").to_string() == m.equation("T").to_string());
    CHECK(oe.equation("X").to_string() == m.equation("X").to_string());
    CHECK_FALSE(oe.equation("Y").references_name("T"));

    // E[modified Y - original Y | T=0] = beta (difference is beta * (1 - T)).
    const NoiseBatch batch = sample_noise(m.noise(), 31, 20000);
    const Eigen::MatrixXd base = solve(m, batch);
    const Eigen::MatrixXd mod = solve(oe, batch);
    double acc = 0.0;
    long count = 0;
    for (int i = 0; i < 20000; ++i) {
      if (base(i, m.var_index("T")) == 0.0) {
        acc += mod(i, m.var_index("Y")) - base(i, m.var_index("Y"));
        ++count;
      }
    }
    CHECK(acc / static_cast<double>(count) == doctest::Approx(2.0).epsilon(1e-9));
  }

  TEST_CASE("outcome-equation intervention is the identity when Y ignores T") {
    const ScmModel m = cor1_model();
    std::vector<std::pair<std::string, Expression>> eqs;
    eqs.emplace_back("T", Expression::parse("U_T"));
    eqs.emplace_back("X", Expression::parse("U_X"));
    eqs.emplace_back("Y", Expression::parse("X + U_Y"));
    const ScmModel no_t(std::move(eqs), m.noise(), {"T", {"X"}, {"Y"}, {0, 1}});
    const ScmModel oe = outcome_equation_intervention(no_t, 1.0);
    for (const auto& v : no_t.variables()) {
      CHECK(oe.equation(v).to_string() == no_t.equation(v).to_string());
    }
  }

  TEST_CASE("counterfactual law: abduction-action-prediction on prop2") {
    const ScmModel m = prop2_model();
    // Evidence {T=0, X=x}, do(T=1), query Y -> mean 2 + x.
    for (double x : {-0.8, 0.3, 1.7}) {
      const Law law = counterfactual_law(m, {{"T", 0.0}, {"X", x}}, Intervention::on("T", 1.0),
                                         {"Y"}, Engine::LinearGaussian);
      CHECK(law.mean()(0) == doctest::Approx(2.0 + x).epsilon(1e-9));
    }
    // Monte-Carlo engine agrees within its sampling error.
    McBudget budget;
    budget.n = 200000;
    budget.seed = 5;
    const Law mc = counterfactual_law(m, {{"T", 0.0}, {"X", 0.3}}, Intervention::on("T", 1.0),
                                      {"Y"}, Engine::MonteCarlo, budget);
    CHECK(mc.mean()(0) == doctest::Approx(2.3).epsilon(0.05));
  }

  TEST_CASE("counterfactual law with no evidence and no intervention is observational") {
    const ScmModel m = prop2_model();
    const Law law = counterfactual_law(m, {}, Intervention{}, {"Y"}, Engine::LinearGaussian);
    // E[Y] = E[T] + E[X] + 0 = 0.5 + 0.5 = 1; prop2 mean of Y.
    CHECK(law.mean()(0) == doctest::Approx(1.0).epsilon(1e-9));
    const Law done = counterfactual_law(m, {}, Intervention::on("T", 1.0), {"Y"},
                                        Engine::LinearGaussian);
    CHECK(done.mean()(0) == doctest::Approx(2.0).epsilon(1e-9));
  }

  TEST_CASE("counterfactual law on the exact engine does Bayes over atoms") {
    const ScmModel m = discrete_chain();
    // Evidence X=2 implies T=1, U_X=2; query Y under do(T=0): Y = X + T + U_Y
    // keeps X at its factual value 2 under do? No: X = T*U_X re-solves to 0.
    const Law law = counterfactual_law(m, {{"X", 2.0}}, Intervention::on("T", 0.0), {"Y"},
                                       Engine::ExactDiscrete);
    // Under do(T=0): X = 0, Y = U_Y with U_Y ~ Bernoulli(0.25) unchanged by evidence.
    CHECK(law.mean()(0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK_THROWS_AS(counterfactual_law(m, {{"X", 7.0}}, Intervention{}, {"Y"},
                                       Engine::ExactDiscrete),
                    ZeroProbabilityEvidence);
    CHECK_THROWS_AS(counterfactual_law(prop2_model(), {}, Intervention{}, {"Y"},
                                       Engine::ExactDiscrete),
                    EngineInapplicable);
  }

  TEST_CASE("exact abduction equals enumerated conditioning") {
    const ScmModel m = discrete_chain();
    // L(Y | T=1) with no intervention must equal the conditional law computed
    // from the full joint table.
    const Law law = counterfactual_law(m, {{"T", 1.0}}, Intervention{}, {"Y"},
                                       Engine::ExactDiscrete);
    const AtomTable atoms = enumerate_noise(m.noise());
    const Eigen::MatrixXd solved = solve_on(m, atoms.coords);
    std::map<double, double> expected;
    double mass = 0.0;
    for (Eigen::Index i = 0; i < atoms.probs.size(); ++i) {
      if (solved(i, m.var_index("T")) == 1.0) {
        expected[solved(i, m.var_index("Y"))] += atoms.probs(i);
        mass += atoms.probs(i);
      }
    }
    const auto& table = law.table();
    double tv = 0.0;
    for (Eigen::Index i = 0; i < table.probs.size(); ++i) {
      tv += std::abs(table.probs(i) - expected[table.coords(i, 0)] / mass);
    }
    CHECK(tv <= 1e-12);
  }

  TEST_CASE("kernel rejection reports empty acceptance") {
    const ScmModel m = prop2_model();
    McBudget budget;
    budget.n = 1000;
    CHECK_THROWS_AS(counterfactual_law(m, {{"X", 1000.0}}, Intervention{}, {"Y"},
                                       Engine::MonteCarlo, budget),
                    EmptyAcceptance);
  }

  TEST_CASE("treatment support is verified at construction") {
    std::vector<std::pair<std::string, Expression>> eqs;
    eqs.emplace_back("T", Expression::parse("3*U_T"));
    NoiseSpace noise({NoiseSpec::bernoulli("U_T", 0.5)});
    CHECK_THROWS_AS(ScmModel(std::move(eqs), std::move(noise), {"T", {}, {}, {0, 1}}),
                    ValidationError);
  }
}
