#include <doctest.h>

#include <cmath>

#include "cfl/errors.hpp"
#include "cfl/rcm.hpp"
#include "cfl/stats.hpp"
#include "generators.hpp"
#include "models.hpp"

using namespace cfl;
using namespace cfl_tests;

namespace {

double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

}  // namespace

TEST_SUITE("rcm") {
  TEST_CASE("entailed RCM of the motivating model") {
    const ScmModel m = motivating(1.0, 2.0);
    const FunctionalRcm rcm = entailed_rcm(m);
    const NoiseBatch batch = sample_noise(m.noise(), 13, 5000);
    const RcmBatch rb = rcm.generate(batch.values);
    // Y_t = (alpha + beta) t + U_X + U_Y per draw.
    for (long i = 0; i < 5000; ++i) {
      const double base = batch.values(i, 1) + batch.values(i, 2);
      CHECK(rb.y_t[0](i, 0) == doctest::Approx(base).epsilon(1e-12));
      CHECK(rb.y_t[1](i, 0) == doctest::Approx(3.0 + base).epsilon(1e-12));
    }
  }

  TEST_CASE("entailed RCM of the prop2 model") {
    const ScmModel m = prop2_model();
    const FunctionalRcm rcm = entailed_rcm(m);
    const NoiseBatch batch = sample_noise(m.noise(), 14, 5000);
    const RcmBatch rb = rcm.generate(batch.values);
    for (long i = 0; i < 5000; ++i) {
      const double base = batch.values(i, 1) + batch.values(i, 2);
      CHECK(rb.y_t[0](i, 0) == doctest::Approx(base).epsilon(1e-12));
      CHECK(rb.y_t[1](i, 0) == doctest::Approx(2.0 + base).epsilon(1e-12));
    }
  }

  TEST_CASE("potential outcomes collapse when Y ignores the treatment") {
    const FunctionalRcm rcm = entailed_rcm(cor1_model());
    // cor1's Y references T; build the T-free variant instead.
    std::vector<std::pair<std::string, Expression>> eqs;
    eqs.emplace_back("T", Expression::parse("U_T"));
    eqs.emplace_back("X", Expression::parse("U_X"));
    eqs.emplace_back("Y", Expression::parse("X + U_Y"));
    NoiseSpace noise({NoiseSpec::bernoulli("U_T", 0.5), NoiseSpec::gaussian("U_X", 0, 1),
                      NoiseSpec::gaussian("U_Y", 0, 1)});
    const ScmModel free(std::move(eqs), std::move(noise), {"T", {"X"}, {"Y"}, {0, 1}});
    const RcmBatch rb = entailed_rcm(free).generate(sample_noise(free.noise(), 3, 2000).values);
    CHECK((rb.y_t[0] - rb.y_t[1]).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("Lemma-4 mechanism: entailed RCMs are exactly consistent") {
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
      const ScmModel m = random_acyclic_model(stream_key(99, seed));
      McBudget budget;
      budget.n = 5000;
      budget.seed = seed;
      const CheckReport rep = check_consistency(entailed_rcm(m), budget);
      CHECK(rep.holds);
      CHECK(rep.statistic == 0.0);
    }
  }

  TEST_CASE("user constructions: prop2 pair is consistent") {
    const ScmModel m = prop2_model();
    const FunctionalRcm rcm = user_rcm(
        m, {{Expression::parse("(1-T)*(X+U_Y) + T*(X-U_Y)")},
            {Expression::parse("(1-T)*(1+X-U_Y) + T*(1+X+U_Y)")}});
    McBudget budget;
    budget.n = 20000;
    const CheckReport rep = check_consistency(rcm, budget);
    CHECK(rep.holds);
    CHECK(rep.statistic == 0.0);
  }

  TEST_CASE("user constructions: shifted potential outcomes are consistent") {
    const ScmModel m = motivating(1.0, 2.0);
    const FunctionalRcm rcm = user_rcm(
        m, {{Expression::parse("(1-T)*Y + T*(U_X + U_Y + 1)")},
            {Expression::parse("T*Y + (1-T)*(3 + U_X + U_Y + 1)")}});
    McBudget budget;
    budget.n = 20000;
    CHECK(check_consistency(rcm, budget).holds);
  }

  TEST_CASE("Y0 := Y + 1 violates consistency with witnesses") {
    const ScmModel m = prop2_model();
    const FunctionalRcm rcm =
        user_rcm(m, {{Expression::parse("Y + 1")}, {Expression::parse("Y")}});
    McBudget budget;
    budget.n = 5000;
    const CheckReport rep = check_consistency(rcm, budget);
    CHECK_FALSE(rep.holds);
    CHECK(rep.statistic == doctest::Approx(1.0));
    CHECK_FALSE(rep.witnesses.empty());
  }

  TEST_CASE("consistency can be checked exactly on finite spaces") {
    const ScmModel m = discrete_chain();
    CHECK(check_consistency(entailed_rcm(m), {}, Engine::ExactDiscrete).holds);
    const FunctionalRcm bad =
        user_rcm(m, {{Expression::parse("Y + 1")}, {Expression::parse("Y")}});
    const CheckReport rep = check_consistency(bad, {}, Engine::ExactDiscrete);
    CHECK_FALSE(rep.holds);
    CHECK(rep.method == Engine::ExactDiscrete);
  }

  TEST_CASE("analytic propensity of prop2 matches the density-ratio formula") {
    const ObservationalView obs(prop2_model());
    Eigen::VectorXd x(1);
    for (double xv : {-1.0, 0.0, 0.4, 1.3}) {
      x(0) = xv;
      const double expect1 = phi(xv - 1.0) / (phi(xv) + phi(xv - 1.0));
      CHECK(propensity(obs, 1, x, Engine::LinearGaussian) ==
            doctest::Approx(expect1).epsilon(1e-9));
      CHECK(propensity(obs, 0, x, Engine::LinearGaussian) ==
            doctest::Approx(1.0 - expect1).epsilon(1e-9));
    }
    CHECK(check_positivity(obs, Engine::LinearGaussian).holds);
  }

  TEST_CASE("treatment deterministic in the covariate fails positivity") {
    std::vector<std::pair<std::string, Expression>> eqs;
    eqs.emplace_back("X", Expression::parse("U_X"));
    eqs.emplace_back("T", Expression::parse("indicator(X > 0)"));
    eqs.emplace_back("Y", Expression::parse("T + X + U_Y"));
    NoiseSpace noise({NoiseSpec::gaussian("U_X", 0, 1), NoiseSpec::gaussian("U_Y", 0, 1)});
    const ScmModel m(std::move(eqs), std::move(noise), {"T", {"X"}, {"Y"}, {0, 1}});
    const ObservationalView obs(m);
    const CheckReport gaussian = check_positivity(obs, Engine::LinearGaussian);
    CHECK_FALSE(gaussian.holds);
    McBudget budget;
    budget.n = 50000;
    const CheckReport mc = check_positivity(obs, Engine::MonteCarlo, budget);
    CHECK_FALSE(mc.holds);
  }

  TEST_CASE("independent treatment gives propensity one half everywhere") {
    const ObservationalView obs(cor1_model());
    Eigen::VectorXd x(1);
    for (double xv : {-2.0, 0.0, 2.0}) {
      x(0) = xv;
      CHECK(propensity(obs, 1, x, Engine::LinearGaussian) == doctest::Approx(0.5).epsilon(1e-9));
    }
    CHECK(check_positivity(obs, Engine::LinearGaussian).holds);
  }

  TEST_CASE("smoking-style probit treatment passes analytic positivity") {
    const ObservationalView obs(smoking());
    CHECK(check_positivity(obs, Engine::LinearGaussian).holds);
    McBudget budget;
    budget.n = 100000;
    CHECK(check_positivity(obs, Engine::MonteCarlo, budget).holds);
  }

  TEST_CASE("exact positivity on a finite model") {
    {
      std::vector<std::pair<std::string, Expression>> eqs;
      eqs.emplace_back("T", Expression::parse("U_T"));
      eqs.emplace_back("X", Expression::parse("U_X"));
      eqs.emplace_back("Y", Expression::parse("X + T + U_Y"));
      NoiseSpace noise({NoiseSpec::bernoulli("U_T", 0.5),
                        NoiseSpec::discrete("U_X", {{0.0, 0.5}, {1.0, 0.5}}),
                        NoiseSpec::bernoulli("U_Y", 0.25)});
      const ScmModel m(std::move(eqs), std::move(noise), {"T", {"X"}, {"Y"}, {0, 1}});
      CHECK(check_positivity(ObservationalView(m), Engine::ExactDiscrete).holds);
    }
    // discrete_chain has X = T*U_X: the strata X=1, X=2 are reachable only
    // under treatment, so positivity fails there.
    CHECK_FALSE(check_positivity(ObservationalView(discrete_chain()),
                                 Engine::ExactDiscrete).holds);

    // A stratum with deterministic treatment: T := U_X (covariate-valued).
    std::vector<std::pair<std::string, Expression>> eqs;
    eqs.emplace_back("X", Expression::parse("U_X"));
    eqs.emplace_back("T", Expression::parse("X"));
    eqs.emplace_back("Y", Expression::parse("T + U_Y"));
    NoiseSpace noise({NoiseSpec::bernoulli("U_X", 0.5), NoiseSpec::bernoulli("U_Y", 0.5)});
    const ScmModel det(std::move(eqs), std::move(noise), {"T", {"X"}, {"Y"}, {0, 1}});
    const CheckReport rep = check_positivity(ObservationalView(det), Engine::ExactDiscrete);
    CHECK_FALSE(rep.holds);
    CHECK_FALSE(rep.witnesses.empty());
  }

  TEST_CASE("prop2 ignorability verdicts on the analytic engine") {
    const ScmModel m = prop2_model();
    const FunctionalRcm cross_rcm = user_rcm(
        m, {{Expression::parse("(1-T)*(X+U_Y) + T*(X-U_Y)")},
            {Expression::parse("(1-T)*(1+X-U_Y) + T*(1+X+U_Y)")}});
    const FunctionalRcm single_rcm = user_rcm(
        m, {{Expression::parse("X + U_Y")},
            {Expression::parse("(1-T)*(1+X-U_Y) + T*(1+X+U_Y)")}});

    CHECK(check_ignorability(cross_rcm, IgnorabilityMode::Cross, Engine::LinearGaussian).holds);
    CHECK(check_ignorability(cross_rcm, IgnorabilityMode::Single, Engine::LinearGaussian).holds);
    CHECK(check_ignorability(single_rcm, IgnorabilityMode::Single, Engine::LinearGaussian).holds);
    const CheckReport cross_fail =
        check_ignorability(single_rcm, IgnorabilityMode::Cross, Engine::LinearGaussian);
    CHECK_FALSE(cross_fail.holds);
    CHECK_FALSE(cross_fail.witnesses.empty());
  }

  TEST_CASE("entailed RCM of the motivating model fails single ignorability") {
    // Given X=x, Y_{T=t} = (alpha+beta) t + x - alpha T + U_Y depends on T.
    const FunctionalRcm rcm = entailed_rcm(motivating(1.0, 2.0));
    const CheckReport gaussian =
        check_ignorability(rcm, IgnorabilityMode::Single, Engine::LinearGaussian);
    CHECK_FALSE(gaussian.holds);
    McBudget budget;
    budget.n = 60000;
    budget.seed = 5;
    const CheckReport mc = check_ignorability(rcm, IgnorabilityMode::Single, Engine::MonteCarlo,
                                              budget);
    CHECK_FALSE(mc.holds);
  }

  TEST_CASE("exact ignorability on a finite model") {
    // Y_t built from U_Y only: trivially ignorable.
    std::vector<NoiseSpec> specs{NoiseSpec::bernoulli("U_T", 0.5),
                                 NoiseSpec::bernoulli("U_X", 0.5),
                                 NoiseSpec::bernoulli("U_Y", 0.25)};
    auto good = FunctionalRcm::from_components(
        NoiseSpace(specs), Expression::parse("U_T"),
        {{"X", Expression::parse("U_X")}},
        {{Expression::parse("U_Y")}, {Expression::parse("U_Y + 1")}}, {0, 1});
    CHECK(check_ignorability(good, IgnorabilityMode::Cross, Engine::ExactDiscrete).holds);
    CHECK(check_ignorability(good, IgnorabilityMode::Single, Engine::ExactDiscrete).holds);

    // Y_0 echoes T: ignorability fails.
    auto bad = FunctionalRcm::from_components(
        NoiseSpace(specs), Expression::parse("U_T"),
        {{"X", Expression::parse("U_X")}},
        {{Expression::parse("U_Y + T")}, {Expression::parse("U_Y + 1")}}, {0, 1});
    CHECK_FALSE(check_ignorability(bad, IgnorabilityMode::Single, Engine::ExactDiscrete).holds);
  }

  TEST_CASE("cross ignorability implies single ignorability (exact engine)") {
    std::vector<NoiseSpec> specs{NoiseSpec::bernoulli("U_T", 0.4),
                                 NoiseSpec::bernoulli("U_X", 0.5),
                                 NoiseSpec::discrete("U_Y", {{0.0, 0.5}, {2.0, 0.5}})};
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const FunctionalRcm rcm = random_finite_rcm(stream_key(1234, seed));
      const bool cross =
          check_ignorability(rcm, IgnorabilityMode::Cross, Engine::ExactDiscrete).holds;
      const bool single =
          check_ignorability(rcm, IgnorabilityMode::Single, Engine::ExactDiscrete).holds;
      if (cross) CHECK(single);
    }
  }

  TEST_CASE("identified single-outcome means of prop2") {
    const ObservationalView obs(prop2_model());
    const Law l0 = identify_single_outcome(obs, 0, Engine::LinearGaussian);
    const Law l1 = identify_single_outcome(obs, 1, Engine::LinearGaussian);
    CHECK(l0.mean()(2) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(l1.mean()(2) == doctest::Approx(1.5).epsilon(1e-9));
    // Monte Carlo agrees within sampling error.
    McBudget budget;
    budget.n = 200000;
    budget.seed = 77;
    const Law m0 = identify_single_outcome(obs, 0, Engine::MonteCarlo, budget);
    CHECK(m0.mean()(2) == doctest::Approx(0.5).epsilon(0.05));
  }

  TEST_CASE("identification depends only on the observational view") {
    // Lemma-3 uniqueness: the identified law is a function of (T, X, Y) alone,
    // so any RCM over the same observational view yields the same law.
    const ScmModel m = prop2_model();
    const FunctionalRcm rcm = user_rcm(
        m, {{Expression::parse("X + U_Y")},
            {Expression::parse("(1-T)*(1+X-U_Y) + T*(1+X+U_Y)")}});
    McBudget budget;
    budget.n = 50000;
    budget.seed = 3;
    const Law from_model = identify_single_outcome(ObservationalView(m), 1, Engine::MonteCarlo,
                                                   budget);
    const Law from_rcm = identify_single_outcome(ObservationalView(rcm), 1, Engine::MonteCarlo,
                                                 budget);
    CHECK((from_model.empirical_rep().sample - from_rcm.empirical_rep().sample)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }

  TEST_CASE("identification on a discrete model with an idle outcome") {
    // Y ignores (T, X): the identified conditional law is the Y marginal.
    std::vector<std::pair<std::string, Expression>> eqs;
    eqs.emplace_back("T", Expression::parse("U_T"));
    eqs.emplace_back("X", Expression::parse("U_X"));
    eqs.emplace_back("Y", Expression::parse("U_Y"));
    NoiseSpace noise({NoiseSpec::bernoulli("U_T", 0.5), NoiseSpec::bernoulli("U_X", 0.25),
                      NoiseSpec::bernoulli("U_Y", 0.6)});
    const ScmModel m(std::move(eqs), std::move(noise), {"T", {"X"}, {"Y"}, {0, 1}});
    const Law ident = identify_single_outcome(ObservationalView(m), 1, Engine::ExactDiscrete);
    // P(Y_1 = 1 | T, X) = 0.6 in every cell; the marginal of the last coord.
    const Law y_marginal = ident.marginal({2});
    CHECK(y_marginal.mean()(0) == doctest::Approx(0.6).epsilon(1e-12));
    // And (T, X) marginal is untouched.
    CHECK(ident.marginal({0}).mean()(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(ident.marginal({1}).mean()(0) == doctest::Approx(0.25).epsilon(1e-12));
  }

  TEST_CASE("identification raises on an empty stratum") {
    // X = T: conditioning cells never mix treatments.
    std::vector<std::pair<std::string, Expression>> eqs;
    eqs.emplace_back("T", Expression::parse("U_T"));
    eqs.emplace_back("X", Expression::parse("T"));
    eqs.emplace_back("Y", Expression::parse("T + U_Y"));
    NoiseSpace noise({NoiseSpec::bernoulli("U_T", 0.5), NoiseSpec::bernoulli("U_Y", 0.5)});
    const ScmModel m(std::move(eqs), std::move(noise), {"T", {"X"}, {"Y"}, {0, 1}});
    CHECK_THROWS_AS(identify_single_outcome(ObservationalView(m), 1, Engine::ExactDiscrete),
                    PositivityViolation);
  }

  TEST_CASE("structural representation round-trips finite RCMs") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const FunctionalRcm rcm = random_finite_rcm(stream_key(777, seed));
      const StructuralRepresentation rep = structural_representation(rcm);
      CHECK(representation_roundtrip_gap(rcm, rep) == 0.0);
    }
  }

  TEST_CASE("structural representation of an entailed discrete RCM keeps laws") {
    const ScmModel m = discrete_chain();
    const FunctionalRcm rcm = entailed_rcm(m);
    const StructuralRepresentation rep = structural_representation(rcm);
    CHECK(representation_roundtrip_gap(rcm, rep) == 0.0);
    // Cross-outcome joint tables coincide exactly.
    const AtomTable in_atoms = enumerate_noise(rcm.noise());
    const AtomTable out_atoms = enumerate_noise(rep.model.noise());
    const RcmBatch in = rcm.generate(in_atoms.coords);
    const RcmBatch out = entailed_rcm(rep.model).generate(out_atoms.coords);
    auto flat = [](const RcmBatch& rb, const Eigen::VectorXd& probs) {
      Eigen::MatrixXd c(rb.t.size(), 4);
      c.col(0) = rb.t;
      c.col(1) = rb.x;
      c.col(2) = rb.y_t[0];
      c.col(3) = rb.y_t[1];
      return Law::exact_table({"t", "x", "y0", "y1"}, c, probs);
    };
    const auto d = law_distance(flat(in, in_atoms.probs), flat(out, out_atoms.probs));
    CHECK(d.statistic <= 1e-12);
  }

  TEST_CASE("structural representation refuses continuous noise spaces") {
    CHECK_THROWS_AS(structural_representation(entailed_rcm(prop2_model())), NotEnumerable);
  }

  TEST_CASE("every treatment level must be reachable") {
    std::vector<std::pair<std::string, Expression>> eqs;
    eqs.emplace_back("T", Expression::parse("U_T"));
    eqs.emplace_back("Y", Expression::parse("T + U_Y"));
    NoiseSpace noise({NoiseSpec::point_mass("U_T", 0.0), NoiseSpec::bernoulli("U_Y", 0.5)});
    const ScmModel m(std::move(eqs), std::move(noise), {"T", {}, {"Y"}, {0, 1}});
    CHECK_THROWS_AS(entailed_rcm(m), ValidationError);  // P(T=1) = 0
  }

  TEST_CASE("table inputs with continuous support are rejected") {
    TableDef table;
    table.inputs = {"U"};
    table.rows = {{{0.0}, 1.0}};
    std::vector<std::pair<std::string, Expression>> eqs;
    eqs.emplace_back("Y", Expression::table_lookup(table));
    NoiseSpace noise({NoiseSpec::gaussian("U", 0, 1)});
    CHECK_THROWS_AS(ScmModel(std::move(eqs), std::move(noise), {}), ValidationError);
  }

  TEST_CASE("corollary-1 randomized check: entailed RCM matches the identified law") {
    // Without posttreatment covariates, L(T, X, Y_{T=t}) must equal the
    // law identified from the observational view alone.
    int agree = 0;
    const int trials = 10;
    for (std::uint64_t seed = 0; seed < trials; ++seed) {
      const ScmModel m = random_linear_model(stream_key(8080, seed), true);
      const ObservationalView obs(m);
      bool ok = true;
      for (int t = 0; t <= 1; ++t) {
        McBudget budget;
        budget.n = 20000;
        budget.seed = stream_key(41, seed * 2 + static_cast<std::uint64_t>(t));
        budget.max_pairwise = 256;
        budget.permutations = 199;
        const Law ident = identify_single_outcome(obs, t, Engine::MonteCarlo, budget);
        // Entailed counterfactual triple on an independent stream.
        const FunctionalRcm rcm = entailed_rcm(m);
        const NoiseBatch batch =
            sample_noise(m.noise(), stream_key(42, seed * 2 + static_cast<std::uint64_t>(t)),
                         20000);
        const RcmBatch rb = rcm.generate(batch.values);
        Eigen::MatrixXd flat(rb.t.size(), 2 + rb.x.cols());
        flat.col(0) = rb.t;
        flat.middleCols(1, rb.x.cols()) = rb.x;
        flat.col(1 + rb.x.cols()) = rb.y_t[static_cast<std::size_t>(t)].col(0);
        const Law done = Law::empirical(ident.dims(), std::move(flat), budget.seed, "entailed");
        const auto d = law_distance(ident, done, budget);
        if (d.p_value && *d.p_value < 0.01) ok = false;
      }
      if (ok) ++agree;
    }
    CHECK(agree >= trials - 1);
  }

  TEST_CASE("outcome noises are independent of (T, X) under the graph conditions") {
    // Lemma-5 mechanism, checked with a distance-covariance independence test.
    const ScmModel m = random_linear_model(4242, false);
    const NoiseBatch batch = sample_noise(m.noise(), 5, 100000);
    const Eigen::MatrixXd solved = solve_on(m, batch.values);
    const int uy = m.noise().index_of("U_Y");
    Eigen::MatrixXd tx(solved.rows(), 1 + static_cast<Eigen::Index>(m.roles().covariates.size()));
    tx.col(0) = solved.col(m.var_index("T"));
    for (std::size_t j = 0; j < m.roles().covariates.size(); ++j) {
      tx.col(1 + static_cast<Eigen::Index>(j)) =
          solved.col(m.var_index(m.roles().covariates[j]));
    }
    const auto res = dcov_independence_test(batch.values.col(uy), tx, 199, 6, 512);
    CHECK(res.p_value > 0.01);
  }
}
