#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cfl/equivalence.hpp"
#include "cfl/errors.hpp"
#include "cfl/estimands.hpp"
#include "cfl/scenario.hpp"

namespace py = pybind11;
using namespace cfl;

namespace {

Engine engine_from_name(const std::string& name) {
  if (name == "exact") return Engine::ExactDiscrete;
  if (name == "gaussian") return Engine::LinearGaussian;
  if (name == "mc") return Engine::MonteCarlo;
  throw ValidationError("unknown engine '" + name + "' (use exact, gaussian or mc)");
}

McBudget budget_from_kwargs(long n, std::uint64_t seed, int permutations, int max_pairwise) {
  McBudget b;
  b.n = n;
  b.seed = seed;
  b.permutations = permutations;
  b.max_pairwise = max_pairwise;
  return b;
}

}  // namespace

PYBIND11_MODULE(_cfl, m) {
  m.doc() = "Structural and potential-outcome counterfactuals on a shared probability space";

  py::register_exception<Error>(m, "CflError");

  // --- probability space -------------------------------------------------
  py::class_<NoiseSpec>(m, "NoiseSpec")
      .def_static("point_mass", &NoiseSpec::point_mass, py::arg("name"), py::arg("c"))
      .def_static("bernoulli", &NoiseSpec::bernoulli, py::arg("name"), py::arg("p"))
      .def_static("uniform", &NoiseSpec::uniform, py::arg("name"), py::arg("a"), py::arg("b"))
      .def_static("gaussian", &NoiseSpec::gaussian, py::arg("name"), py::arg("mean"),
                  py::arg("variance"))
      .def_static(
          "discrete",
          [](const std::string& name, const std::vector<std::pair<double, double>>& atoms) {
            std::vector<WeightedValue> ws;
            for (auto [v, p] : atoms) ws.push_back({v, p});
            return NoiseSpec::discrete(name, ws);
          },
          py::arg("name"), py::arg("atoms"))
      .def_property_readonly("name", &NoiseSpec::name)
      .def("mean", &NoiseSpec::mean)
      .def("variance", &NoiseSpec::variance)
      .def("finite_support", &NoiseSpec::finite_support);

  py::class_<NoiseSpace>(m, "NoiseSpace")
      .def(py::init<std::vector<NoiseSpec>>())
      .def("size", &NoiseSpace::size)
      .def("index_of", &NoiseSpace::index_of)
      .def_property_readonly("id", &NoiseSpace::id);

  py::class_<NoiseBatch>(m, "NoiseBatch")
      .def_readonly("values", &NoiseBatch::values)
      .def_readonly("seed", &NoiseBatch::seed)
      .def_readonly("space_id", &NoiseBatch::space_id);

  py::class_<AtomTable>(m, "AtomTable")
      .def_readonly("coords", &AtomTable::coords)
      .def_readonly("probs", &AtomTable::probs)
      .def("size", &AtomTable::size);

  m.def("sample_noise", &sample_noise, py::arg("space"), py::arg("seed"), py::arg("n"));
  m.def("split_stream", &split_stream, py::arg("seed"), py::arg("k"));
  m.def("enumerate_noise", &enumerate_noise, py::arg("space"));

  // --- expressions and models ---------------------------------------------
  py::class_<Expression>(m, "Expression")
      .def_static("parse", &Expression::parse, py::arg("text"),
                  py::arg("params") = std::map<std::string, double>{})
      .def_static("constant", &Expression::constant)
      .def_static("ref", &Expression::ref)
      .def("references", &Expression::references)
      .def("__str__", &Expression::to_string);

  py::class_<ModelRoles>(m, "ModelRoles")
      .def(py::init([](std::string treatment, std::vector<std::string> covariates,
                       std::vector<std::string> outcomes, std::vector<int> support) {
             return ModelRoles{std::move(treatment), std::move(covariates), std::move(outcomes),
                               std::move(support)};
           }),
           py::arg("treatment"), py::arg("covariates"), py::arg("outcomes"),
           py::arg("support"))
      .def_readonly("treatment", &ModelRoles::treatment)
      .def_readonly("covariates", &ModelRoles::covariates)
      .def_readonly("outcomes", &ModelRoles::outcomes)
      .def_readonly("support", &ModelRoles::treatment_support);

  py::class_<Intervention>(m, "Intervention")
      .def(py::init([](const std::map<std::string, double>& assignments) {
             Intervention iv;
             for (const auto& [k, v] : assignments) iv.assignments.emplace_back(k, v);
             return iv;
           }),
           py::arg("assignments"));

  py::class_<AssumptionFlags>(m, "AssumptionFlags")
      .def_readonly("acyclic", &AssumptionFlags::acyclic)
      .def_readonly("outcome_a5", &AssumptionFlags::outcome_a5)
      .def_readonly("indep_noises_a6", &AssumptionFlags::indep_noises_a6)
      .def_readonly("no_posttreatment_a7_parent", &AssumptionFlags::no_posttreatment_a7_parent)
      .def_readonly("no_posttreatment_a7_descendant",
                    &AssumptionFlags::no_posttreatment_a7_descendant);

  py::class_<CausalGraph>(m, "CausalGraph")
      .def_readonly("endogenous", &CausalGraph::endogenous)
      .def_readonly("exogenous", &CausalGraph::exogenous)
      .def_readonly("edges", &CausalGraph::edges);

  py::class_<ScmModel>(m, "ScmModel")
      .def(py::init<std::vector<std::pair<std::string, Expression>>, NoiseSpace, ModelRoles>(),
           py::arg("equations"), py::arg("noise"), py::arg("roles"))
      .def_property_readonly("variables", &ScmModel::variables)
      .def_property_readonly("topo_order", &ScmModel::topo_order)
      .def("graph", &ScmModel::graph)
      .def("equation_text",
           [](const ScmModel& self, const std::string& var) {
             return self.equation(var).to_string();
           })
      .def("noise", &ScmModel::noise, py::return_value_policy::copy);

  m.def("validate", &validate, py::arg("model"));
  m.def(
      "solve",
      [](const ScmModel& model, const NoiseBatch& batch) { return solve(model, batch); },
      py::arg("model"), py::arg("batch"));
  m.def("solve_on", &solve_on, py::arg("model"), py::arg("noise_values"));
  m.def("apply_do", &apply_do, py::arg("model"), py::arg("intervention"));
  m.def("outcome_equation_intervention", &outcome_equation_intervention, py::arg("model"),
        py::arg("t"));
  m.def("check_assumptions", &check_assumptions, py::arg("model"));
  m.def(
      "counterfactual_law",
      [](const ScmModel& model, const std::map<std::string, double>& evidence,
         const Intervention& iv, const std::vector<std::string>& query,
         const std::string& engine, long n, std::uint64_t seed) {
        McBudget budget;
        budget.n = n;
        budget.seed = seed;
        return counterfactual_law(model, evidence, iv, query, engine_from_name(engine), budget);
      },
      py::arg("model"), py::arg("evidence"), py::arg("intervention"), py::arg("query"),
      py::arg("engine") = "gaussian", py::arg("n") = 100000, py::arg("seed") = 1);

  // --- laws ----------------------------------------------------------------
  py::class_<Law>(m, "Law")
      .def_property_readonly("dims", &Law::dims)
      .def("mean", &Law::mean)
      .def("marginal", &Law::marginal)
      .def("pseudo_sample", &Law::pseudo_sample, py::arg("n"), py::arg("seed"))
      .def_property_readonly("kind", [](const Law& law) {
        return law.is_exact() ? "exact" : law.is_gaussian() ? "gaussian" : "empirical";
      });

  m.def(
      "law_distance",
      [](const Law& a, const Law& b, long n, std::uint64_t seed, int permutations,
         int max_pairwise) {
        const auto d = law_distance(a, b, budget_from_kwargs(n, seed, permutations, max_pairwise));
        py::dict out;
        out["statistic"] = d.statistic;
        out["p_value"] = d.p_value ? py::object(py::float_(*d.p_value)) : py::none();
        return out;
      },
      py::arg("a"), py::arg("b"), py::arg("n") = 100000, py::arg("seed") = 1,
      py::arg("permutations") = 200, py::arg("max_pairwise") = 1024);

  // --- rcm -------------------------------------------------------------------
  py::class_<RcmBatch>(m, "RcmBatch")
      .def_readonly("t", &RcmBatch::t)
      .def_readonly("x", &RcmBatch::x)
      .def_readonly("y", &RcmBatch::y)
      .def_readonly("y_t", &RcmBatch::y_t);

  py::class_<FunctionalRcm>(m, "FunctionalRcm")
      .def_static("entailed", &FunctionalRcm::entailed, py::arg("model"))
      .def_static("outcome_equation", &FunctionalRcm::outcome_equation, py::arg("model"))
      .def_static("user", &FunctionalRcm::user, py::arg("base"), py::arg("po_exprs"))
      .def("generate",
           [](const FunctionalRcm& self, const NoiseBatch& batch) {
             return self.generate(batch);
           })
      .def_property_readonly("treatment_support", &FunctionalRcm::treatment_support)
      .def_property_readonly("covariate_dim", &FunctionalRcm::covariate_dim)
      .def_property_readonly("outcome_dim", &FunctionalRcm::outcome_dim);

  py::class_<ObservationalView>(m, "ObservationalView")
      .def(py::init<const ScmModel&>())
      .def(py::init<const FunctionalRcm&>())
      .def("sample",
           [](const ObservationalView& self, std::uint64_t seed, long n) {
             const auto s = self.sample(seed, n);
             py::dict out;
             out["t"] = s.t;
             out["x"] = s.x;
             out["y"] = s.y;
             return out;
           })
      .def("enumerable", &ObservationalView::enumerable)
      .def("exact_joint", &ObservationalView::exact_joint);

  py::class_<CheckReport>(m, "CheckReport")
      .def_readonly("holds", &CheckReport::holds)
      .def_readonly("statistic", &CheckReport::statistic)
      .def_readonly("threshold", &CheckReport::threshold)
      .def_readonly("witnesses", &CheckReport::witnesses)
      .def_readonly("warnings", &CheckReport::warnings);

  m.def("entailed_rcm", &entailed_rcm, py::arg("model"));
  m.def("user_rcm", &user_rcm, py::arg("base"), py::arg("po_exprs"));
  m.def(
      "check_consistency",
      [](const FunctionalRcm& rcm, long n, std::uint64_t seed, const std::string& engine) {
        McBudget budget;
        budget.n = n;
        budget.seed = seed;
        return check_consistency(rcm, budget, engine_from_name(engine));
      },
      py::arg("rcm"), py::arg("n") = 100000, py::arg("seed") = 1, py::arg("engine") = "mc");
  m.def(
      "check_positivity",
      [](const ObservationalView& obs, const std::string& engine, long n, std::uint64_t seed) {
        McBudget budget;
        budget.n = n;
        budget.seed = seed;
        return check_positivity(obs, engine_from_name(engine), budget);
      },
      py::arg("obs"), py::arg("engine") = "gaussian", py::arg("n") = 100000, py::arg("seed") = 1);
  m.def(
      "propensity",
      [](const ObservationalView& obs, int t, const Eigen::VectorXd& x,
         const std::string& engine) { return propensity(obs, t, x, engine_from_name(engine)); },
      py::arg("obs"), py::arg("t"), py::arg("x"), py::arg("engine") = "gaussian");
  m.def(
      "check_ignorability",
      [](const FunctionalRcm& rcm, const std::string& mode, const std::string& engine, long n,
         std::uint64_t seed) {
        McBudget budget;
        budget.n = n;
        budget.seed = seed;
        return check_ignorability(
            rcm, mode == "cross" ? IgnorabilityMode::Cross : IgnorabilityMode::Single,
            engine_from_name(engine), budget);
      },
      py::arg("rcm"), py::arg("mode") = "single", py::arg("engine") = "gaussian",
      py::arg("n") = 100000, py::arg("seed") = 1);
  m.def(
      "identify_single_outcome",
      [](const ObservationalView& obs, int t, const std::string& engine, long n,
         std::uint64_t seed) {
        McBudget budget;
        budget.n = n;
        budget.seed = seed;
        return identify_single_outcome(obs, t, engine_from_name(engine), budget);
      },
      py::arg("obs"), py::arg("t"), py::arg("engine") = "gaussian", py::arg("n") = 100000,
      py::arg("seed") = 1);

  py::class_<StructuralRepresentation>(m, "StructuralRepresentation")
      .def_readonly("model", &StructuralRepresentation::model)
      .def_readonly("atom_map", &StructuralRepresentation::atom_map);
  m.def("structural_representation", &structural_representation, py::arg("rcm"));
  m.def("representation_roundtrip_gap", &representation_roundtrip_gap, py::arg("rcm"),
        py::arg("rep"));

  // --- equivalence -----------------------------------------------------------
  py::class_<EquivalenceVerdict>(m, "EquivalenceVerdict")
      .def_property_readonly("verdict",
                             [](const EquivalenceVerdict& v) { return verdict_name(v.verdict); })
      .def_readonly("statistic", &EquivalenceVerdict::statistic)
      .def_readonly("threshold", &EquivalenceVerdict::threshold)
      .def_property_readonly("p_value",
                             [](const EquivalenceVerdict& v) {
                               return v.p_value ? py::object(py::float_(*v.p_value)) : py::none();
                             })
      .def_readonly("witness", &EquivalenceVerdict::witness)
      .def_readonly("per_t_detail", &EquivalenceVerdict::per_t_detail);

  auto bind_compare = [&m](const char* name, auto fn) {
    m.def(
        name,
        [fn](const FunctionalRcm& a, const FunctionalRcm& b, long n, std::uint64_t seed,
             int permutations, int max_pairwise) {
          return fn(a, b, budget_from_kwargs(n, seed, permutations, max_pairwise));
        },
        py::arg("a"), py::arg("b"), py::arg("n") = 100000, py::arg("seed") = 1,
        py::arg("permutations") = 200, py::arg("max_pairwise") = 1024);
  };
  bind_compare("compare_cross_outcome",
               [](const FunctionalRcm& a, const FunctionalRcm& b, const McBudget& budget) {
                 return compare_cross_outcome(a, b, budget);
               });
  bind_compare("compare_single_outcome",
               [](const FunctionalRcm& a, const FunctionalRcm& b, const McBudget& budget) {
                 return compare_single_outcome(a, b, budget);
               });
  m.def(
      "compare_almost_sure",
      [](const FunctionalRcm& a, const FunctionalRcm& b, long n, std::uint64_t seed, double tol) {
        McBudget budget;
        budget.n = n;
        budget.seed = seed;
        return compare_almost_sure(a, b, budget, tol);
      },
      py::arg("a"), py::arg("b"), py::arg("n") = 100000, py::arg("seed") = 1,
      py::arg("tol") = 0.0);

  // --- estimands ---------------------------------------------------------------
  py::class_<EstimandReport>(m, "EstimandReport")
      .def_readonly("name", &EstimandReport::name)
      .def_readonly("value", &EstimandReport::value)
      .def_property_readonly("standard_error",
                             [](const EstimandReport& r) {
                               return r.standard_error
                                          ? py::object(py::float_(*r.standard_error))
                                          : py::none();
                             })
      .def_readonly("x", &EstimandReport::x);

  auto bind_scm_estimand = [&m](const char* name, auto fn) {
    m.def(
        name,
        [fn](const ScmModel& model, const Eigen::VectorXd& x, const std::string& engine, long n,
             std::uint64_t seed) {
          McBudget budget;
          budget.n = n;
          budget.seed = seed;
          return fn(model, x, engine_from_name(engine), budget);
        },
        py::arg("model"), py::arg("x"), py::arg("engine") = "gaussian", py::arg("n") = 100000,
        py::arg("seed") = 1);
  };
  m.def(
      "cate_rcm",
      [](const ObservationalView& obs, const Eigen::VectorXd& x, const std::string& engine,
         long n, std::uint64_t seed) {
        McBudget budget;
        budget.n = n;
        budget.seed = seed;
        return cate_rcm(obs, x, engine_from_name(engine), budget);
      },
      py::arg("obs"), py::arg("x"), py::arg("engine") = "gaussian", py::arg("n") = 100000,
      py::arg("seed") = 1);
  bind_scm_estimand("cate_scm",
                    [](const ScmModel& m, const Eigen::VectorXd& x, Engine e,
                       const McBudget& b) { return cate_scm(m, x, e, b); });
  bind_scm_estimand("direct_effect_scm",
                    [](const ScmModel& m, const Eigen::VectorXd& x, Engine e,
                       const McBudget& b) { return direct_effect_scm(m, x, e, b); });
  bind_scm_estimand("interventional_cate",
                    [](const ScmModel& m, const Eigen::VectorXd& x, Engine e,
                       const McBudget& b) { return interventional_cate(m, x, e, b); });
  bind_scm_estimand("relaxed_noise_cate_gap",
                    [](const ScmModel& m, const Eigen::VectorXd& x, Engine e,
                       const McBudget& b) { return relaxed_noise_cate_gap(m, x, e, b); });
  m.def(
      "theorem1_law",
      [](const ScmModel& model, int t, const std::string& engine, long n, std::uint64_t seed) {
        McBudget budget;
        budget.n = n;
        budget.seed = seed;
        return theorem1_law(model, t, engine_from_name(engine), budget);
      },
      py::arg("model"), py::arg("t"), py::arg("engine") = "gaussian", py::arg("n") = 100000,
      py::arg("seed") = 1);
  m.def("ate", &ate, py::arg("y1_law"), py::arg("y0_law"));
  m.def("covariate_grid", &covariate_grid, py::arg("obs"), py::arg("points") = 9,
        py::arg("seed") = 77);

  // --- scenarios -----------------------------------------------------------------
  py::class_<Scenario>(m, "Scenario")
      .def_readonly("id", &Scenario::id)
      .def_readonly("description", &Scenario::description)
      .def_readonly("parameters", &Scenario::parameters)
      .def("instantiate", &Scenario::instantiate,
           py::arg("overrides") = std::map<std::string, double>{})
      .def("instantiate_rcm", &Scenario::instantiate_rcm, py::arg("name"), py::arg("model"),
           py::arg("overrides") = std::map<std::string, double>{});

  py::class_<ReportRow>(m, "ReportRow")
      .def_readonly("estimand", &ReportRow::estimand)
      .def_readonly("x", &ReportRow::x)
      .def_readonly("computed", &ReportRow::computed)
      .def_readonly("expected", &ReportRow::expected)
      .def_readonly("tolerance", &ReportRow::tolerance)
      .def_readonly("pass_", &ReportRow::pass)
      .def_readonly("note", &ReportRow::note);

  py::class_<Report>(m, "Report")
      .def_readonly("scenario_id", &Report::scenario_id)
      .def_readonly("seed", &Report::seed)
      .def_readonly("rows", &Report::rows)
      .def("all_pass", &Report::all_pass)
      .def("to_csv", &Report::to_csv)
      .def("to_markdown", &Report::to_markdown);

  m.def("builtin_scenarios", &builtin_scenarios);
  m.def("find_builtin",
        [](const std::string& id) -> py::object {
          auto s = find_builtin(id);
          return s ? py::cast(*s) : py::object(py::none());
        },
        py::arg("id"));
  m.def("load_scenario", &load_scenario, py::arg("path"));
  m.def("save_scenario", &save_scenario, py::arg("scenario"), py::arg("path"));
  m.def("scenario_from_json", &scenario_from_json, py::arg("text"), py::arg("origin") = "inline");
  m.def("scenario_to_json", &scenario_to_json, py::arg("scenario"));
  m.def(
      "run_scenario",
      [](const Scenario& s, std::uint64_t seed, const std::string& engine, long n,
         const std::map<std::string, double>& params) {
        return run_scenario(s, seed, engine_from_name(engine), n, params);
      },
      py::arg("scenario"), py::arg("seed") = 1, py::arg("engine") = "gaussian",
      py::arg("n") = 100000, py::arg("params") = std::map<std::string, double>{});
}
