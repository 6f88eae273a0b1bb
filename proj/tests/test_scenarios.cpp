#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "cfl/errors.hpp"
#include "cfl/scenario.hpp"

using namespace cfl;

namespace {

std::string temp_path(const std::string& name) {
  return std::string("cfl_test_") + name + ".json";
}

}  // namespace

TEST_SUITE("scenarios") {
  TEST_CASE("the registry carries every worked example") {
    const auto all = builtin_scenarios();
    std::vector<std::string> ids;
    for (const auto& s : all) ids.push_back(s.id);
    for (const char* want :
         {"motivating", "prop2", "remark4", "cor1", "smoking", "prop1", "remark8"}) {
      CHECK(std::find(ids.begin(), ids.end(), want) != ids.end());
    }
    CHECK(find_builtin("motivating").has_value());
    CHECK_FALSE(find_builtin("nope").has_value());
  }

  TEST_CASE("every built-in scenario passes on the analytic engine") {
    for (const auto& s : builtin_scenarios()) {
      const Report report = run_scenario(s, 1, Engine::LinearGaussian, 50000);
      CAPTURE(s.id);
      CHECK(report.all_pass());
    }
  }

  TEST_CASE("prop1 reports three NotEqual verdicts for any shift") {
    const Scenario s = *find_builtin("prop1");
    for (double y : {1.0, -1.0, 0.5}) {
      const Report report = run_scenario(s, 3, Engine::LinearGaussian, 20000, {{"y_shift", y}});
      CAPTURE(y);
      CHECK(report.all_pass());
    }
  }

  TEST_CASE("symbolic expectations survive parameter overrides") {
    const Scenario s = *find_builtin("motivating");
    const Report report =
        run_scenario(s, 5, Engine::LinearGaussian, 20000, {{"alpha", -2.0}, {"beta", 0.5}});
    CHECK(report.all_pass());  // cate_rcm = 0.5, cate_scm = -1.5, checked symbolically
  }

  TEST_CASE("schema totality: every built-in scenario round-trips through a file") {
    for (const auto& s : builtin_scenarios()) {
      const std::string path = temp_path(s.id);
      save_scenario(s, path);
      const Scenario back = load_scenario(path);
      CHECK(scenario_to_json(back) == scenario_to_json(s));
      std::remove(path.c_str());
    }
  }

  TEST_CASE("reports are byte-identical for identical inputs") {
    const Scenario s = *find_builtin("prop2");
    const Report a = run_scenario(s, 9, Engine::MonteCarlo, 20000);
    const Report b = run_scenario(s, 9, Engine::MonteCarlo, 20000);
    CHECK(a.to_csv() == b.to_csv());
    const Report c = run_scenario(s, 10, Engine::MonteCarlo, 20000);
    CHECK(a.to_csv() != c.to_csv());
  }

  TEST_CASE("loading rejects malformed files with located errors") {
    {
      std::ofstream out(temp_path("badjson"));
      out << "{ not json";
    }
    CHECK_THROWS_AS(load_scenario(temp_path("badjson")), ParseError);
    std::remove(temp_path("badjson").c_str());

    // A cyclic model fails validation at load time.
    {
      std::ofstream out(temp_path("cycle"));
      out << R"({"id":"c","model":{"noises":[{"name":"U","dist":"gaussian","mean":0,"var":1}],
        "equations":[["Y","X + U"],["X","Y"]],"treatment":"X","support":[0,1]}})";
    }
    CHECK_THROWS_AS(load_scenario(temp_path("cycle")), CyclicGraph);
    std::remove(temp_path("cycle").c_str());

    // Omitting the Bernoulli parameter names the field.
    {
      std::ofstream out(temp_path("nop"));
      out << R"({"id":"n","model":{"noises":[{"name":"U_T","dist":"bernoulli"}],
        "equations":[["T","U_T"]],"treatment":"T","support":[0,1]}})";
    }
    try {
      load_scenario(temp_path("nop"));
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("'p'") != std::string::npos);
    }
    std::remove(temp_path("nop").c_str());
  }

  TEST_CASE("a loaded file scenario behaves like its builder") {
    const char* text = R"({
      "id": "chain",
      "parameters": {"alpha": 1.0, "beta": 2.0},
      "model": {
        "noises": [
          {"name": "U_T", "dist": "bernoulli", "p": 0.5},
          {"name": "U_X", "dist": "gaussian", "mean": 0, "var": 1},
          {"name": "U_Y", "dist": "gaussian", "mean": 0, "var": 1}
        ],
        "equations": [["T", "U_T"], ["X", "alpha*T + U_X"], ["Y", "X + beta*T + U_Y"]],
        "treatment": "T", "covariates": ["X"], "outcomes": ["Y"], "support": [0, 1]
      },
      "expectations": [
        {"quantity": "cate_rcm", "expected": "beta", "tol": 1e-9},
        {"quantity": "cate_scm", "expected": "alpha + beta", "tol": 1e-9}
      ]
    })";
    const Scenario s = scenario_from_json(text, "inline");
    CHECK(s.model.equations.size() == 3);
    CHECK(s.model.noises.size() == 3);
    const Report report = run_scenario(s, 2, Engine::LinearGaussian, 10000);
    CHECK(report.all_pass());
    CHECK(report.rows.size() == 18);  // two grid quantities, nine points each
  }

  TEST_CASE("fallback engines are noted per row") {
    // The exact engine cannot enumerate a Gaussian space; rows fall back.
    const Scenario s = *find_builtin("motivating");
    const Report report = run_scenario(s, 4, Engine::ExactDiscrete, 20000);
    CHECK(report.all_pass());
    bool saw_fallback = false;
    for (const auto& r : report.rows) {
      if (r.note.find("fell back") != std::string::npos) saw_fallback = true;
    }
    CHECK(saw_fallback);
  }

  TEST_CASE("csv shape: header plus one row per expectation point") {
    const Scenario s = *find_builtin("cor1");
    const Report report = run_scenario(s, 6, Engine::LinearGaussian, 20000);
    const std::string csv = report.to_csv();
    CHECK(csv.rfind("scenario,estimand,x,value,se,engine,seed,expected,tolerance,status\n", 0) ==
          0);
    const std::string md = report.to_markdown();
    CHECK(md.find("| estimand |") != std::string::npos);
    CHECK(md.find("wall") != std::string::npos);
  }
}
