#include "cfl/scenario.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cfl/affine.hpp"
#include "cfl/equivalence.hpp"
#include "cfl/errors.hpp"
#include "cfl/estimands.hpp"
#include "cfl/law.hpp"

namespace cfl {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

NoiseSpec decl_to_spec(const NoiseDecl& d, const std::string& where) {
  if (d.dist == "pointmass") return NoiseSpec::point_mass(d.name, d.c);
  if (d.dist == "bernoulli") return NoiseSpec::bernoulli(d.name, d.p);
  if (d.dist == "discrete") return NoiseSpec::discrete(d.name, d.atoms);
  if (d.dist == "uniform") return NoiseSpec::uniform(d.name, d.a, d.b);
  if (d.dist == "gaussian") return NoiseSpec::gaussian(d.name, d.mean, d.var);
  throw ParseError("unknown distribution '" + d.dist + "'", where);
}

}  // namespace

std::map<std::string, double> Scenario::merged_parameters(
    const std::map<std::string, double>& overrides) const {
  std::map<std::string, double> params = parameters;
  for (const auto& [k, v] : overrides) params[k] = v;
  return params;
}

ScmModel Scenario::instantiate(const std::map<std::string, double>& overrides) const {
  const auto params = merged_parameters(overrides);
  std::vector<NoiseSpec> specs;
  for (const auto& d : model.noises) specs.push_back(decl_to_spec(d, "noises." + d.name));
  std::vector<std::pair<std::string, Expression>> eqs;
  for (const auto& [var, text] : model.equations) {
    eqs.emplace_back(var, Expression::parse(text, params));
  }
  ModelRoles roles;
  roles.treatment = model.treatment;
  roles.covariates = model.covariates;
  roles.outcomes = model.outcomes;
  roles.treatment_support = model.treatment_support;
  return ScmModel(std::move(eqs), NoiseSpace(std::move(specs)), std::move(roles));
}

FunctionalRcm Scenario::instantiate_rcm(const std::string& name, const ScmModel& m,
                                        const std::map<std::string, double>& overrides) const {
  if (name.empty() || name == "entailed") return FunctionalRcm::entailed(m);
  if (name == "outcome_equation") return FunctionalRcm::outcome_equation(m);
  const auto params = merged_parameters(overrides);
  for (const auto& decl : rcms) {
    if (decl.name != name) continue;
    std::vector<std::vector<Expression>> po;
    for (const auto& level : decl.po) {
      std::vector<Expression> exprs;
      for (const auto& text : level) exprs.push_back(Expression::parse(text, params));
      po.push_back(std::move(exprs));
    }
    return FunctionalRcm::user(m, po);
  }
  throw UnknownReference("rcm construction '" + name + "' in scenario " + id);
}

// ---------------------------------------------------------------------------
// JSON round-trip

namespace {

[[noreturn]] void missing_field(const std::string& field, const std::string& origin) {
  throw ParseError("missing field '" + field + "'", origin);
}

double need_number(const json& j, const std::string& field, const std::string& origin) {
  if (!j.contains(field) || !j[field].is_number()) missing_field(field, origin);
  return j[field].get<double>();
}

std::string need_string(const json& j, const std::string& field, const std::string& origin) {
  if (!j.contains(field) || !j[field].is_string()) missing_field(field, origin);
  return j[field].get<std::string>();
}

NoiseDecl parse_noise(const json& j, const std::string& origin) {
  NoiseDecl d;
  d.name = need_string(j, "name", origin);
  d.dist = need_string(j, "dist", origin);
  if (d.dist == "pointmass") {
    d.c = need_number(j, "c", origin + "." + d.name);
  } else if (d.dist == "bernoulli") {
    d.p = need_number(j, "p", origin + "." + d.name);
  } else if (d.dist == "uniform") {
    d.a = need_number(j, "a", origin + "." + d.name);
    d.b = need_number(j, "b", origin + "." + d.name);
  } else if (d.dist == "gaussian") {
    d.mean = need_number(j, "mean", origin + "." + d.name);
    d.var = need_number(j, "var", origin + "." + d.name);
  } else if (d.dist == "discrete") {
    if (!j.contains("atoms") || !j["atoms"].is_array()) {
      missing_field("atoms", origin + "." + d.name);
    }
    for (const auto& a : j["atoms"]) {
      d.atoms.push_back({need_number(a, "value", origin + "." + d.name),
                         need_number(a, "prob", origin + "." + d.name)});
    }
  } else {
    throw ParseError("unknown distribution '" + d.dist + "'", origin + "." + d.name);
  }
  return d;
}

json noise_to_json(const NoiseDecl& d) {
  json j;
  j["name"] = d.name;
  j["dist"] = d.dist;
  if (d.dist == "pointmass") j["c"] = d.c;
  if (d.dist == "bernoulli") j["p"] = d.p;
  if (d.dist == "uniform") {
    j["a"] = d.a;
    j["b"] = d.b;
  }
  if (d.dist == "gaussian") {
    j["mean"] = d.mean;
    j["var"] = d.var;
  }
  if (d.dist == "discrete") {
    json atoms = json::array();
    for (const auto& a : d.atoms) atoms.push_back({{"value", a.value}, {"prob", a.prob}});
    j["atoms"] = atoms;
  }
  return j;
}

}  // namespace

Scenario scenario_from_json(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), origin);
  }
  Scenario s;
  s.id = need_string(j, "id", origin);
  s.description = j.value("description", "");
  if (j.contains("parameters")) {
    for (const auto& [k, v] : j["parameters"].items()) {
      if (!v.is_number()) throw ParseError("parameter '" + k + "' must be a number", origin);
      s.parameters[k] = v.get<double>();
    }
  }
  if (!j.contains("model")) missing_field("model", origin);
  const json& jm = j["model"];
  if (!jm.contains("noises") || !jm["noises"].is_array()) missing_field("model.noises", origin);
  std::size_t idx = 0;
  for (const auto& n : jm["noises"]) {
    s.model.noises.push_back(parse_noise(n, origin + ":noises[" + std::to_string(idx++) + "]"));
  }
  if (!jm.contains("equations") || !jm["equations"].is_array()) {
    missing_field("model.equations", origin);
  }
  for (const auto& eq : jm["equations"]) {
    if (!eq.is_array() || eq.size() != 2 || !eq[0].is_string() || !eq[1].is_string()) {
      throw ParseError("equations must be [variable, expression] pairs", origin);
    }
    s.model.equations.emplace_back(eq[0].get<std::string>(), eq[1].get<std::string>());
  }
  s.model.treatment = need_string(jm, "treatment", origin + ":model");
  if (jm.contains("covariates")) {
    for (const auto& c : jm["covariates"]) s.model.covariates.push_back(c.get<std::string>());
  }
  if (jm.contains("outcomes")) {
    for (const auto& c : jm["outcomes"]) s.model.outcomes.push_back(c.get<std::string>());
  }
  if (jm.contains("support")) {
    for (const auto& c : jm["support"]) s.model.treatment_support.push_back(c.get<int>());
  } else {
    s.model.treatment_support = {0, 1};
  }
  if (j.contains("rcm")) {
    for (const auto& r : j["rcm"]) {
      RcmDecl d;
      d.name = need_string(r, "name", origin + ":rcm");
      if (!r.contains("po") || !r["po"].is_array()) missing_field("rcm.po", origin);
      for (const auto& level : r["po"]) {
        std::vector<std::string> exprs;
        if (level.is_string()) {
          exprs.push_back(level.get<std::string>());
        } else {
          for (const auto& e : level) exprs.push_back(e.get<std::string>());
        }
        d.po.push_back(std::move(exprs));
      }
      s.rcms.push_back(std::move(d));
    }
  }
  if (j.contains("expectations")) {
    std::size_t k = 0;
    for (const auto& e : j["expectations"]) {
      const std::string where = origin + ":expectations[" + std::to_string(k++) + "]";
      Expectation ex;
      ex.quantity = need_string(e, "quantity", where);
      ex.expected = need_string(e, "expected", where);
      ex.rcm = e.value("rcm", "");
      ex.rcm_b = e.value("b", std::string("entailed"));
      if (e.contains("a")) ex.rcm = e["a"].get<std::string>();
      ex.level = e.value("level", "");
      ex.mode = e.value("mode", "");
      ex.flag = e.value("flag", "");
      ex.t = e.value("t", 0);
      ex.tolerance = e.value("tol", 1e-9);
      ex.anchor = e.value("anchor", "");
      s.expectations.push_back(std::move(ex));
    }
  }
  // Instantiation with defaults validates equations, graph and roles.
  (void)s.instantiate();
  return s;
}

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["id"] = s.id;
  j["description"] = s.description;
  json params = json::object();
  for (const auto& [k, v] : s.parameters) params[k] = v;
  j["parameters"] = params;
  json jm;
  json noises = json::array();
  for (const auto& n : s.model.noises) noises.push_back(noise_to_json(n));
  jm["noises"] = noises;
  json eqs = json::array();
  for (const auto& [var, text] : s.model.equations) eqs.push_back({var, text});
  jm["equations"] = eqs;
  jm["treatment"] = s.model.treatment;
  jm["covariates"] = s.model.covariates;
  jm["outcomes"] = s.model.outcomes;
  jm["support"] = s.model.treatment_support;
  j["model"] = jm;
  json rcms = json::array();
  for (const auto& r : s.rcms) {
    json jr;
    jr["name"] = r.name;
    jr["po"] = r.po;
    rcms.push_back(jr);
  }
  j["rcm"] = rcms;
  json exps = json::array();
  for (const auto& e : s.expectations) {
    json je;
    je["quantity"] = e.quantity;
    je["expected"] = e.expected;
    if (!e.rcm.empty()) je["rcm"] = e.rcm;
    if (e.rcm_b != "entailed") je["b"] = e.rcm_b;
    if (!e.level.empty()) je["level"] = e.level;
    if (!e.mode.empty()) je["mode"] = e.mode;
    if (!e.flag.empty()) je["flag"] = e.flag;
    if (e.t != 0) je["t"] = e.t;
    je["tol"] = e.tolerance;
    if (!e.anchor.empty()) je["anchor"] = e.anchor;
    exps.push_back(je);
  }
  j["expectations"] = exps;
  return j.dump(2) + "\n";
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file", path);
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str(), path);
}

void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << scenario_to_json(s);
}

std::optional<Scenario> find_builtin(const std::string& id) {
  for (auto& s : builtin_scenarios()) {
    if (s.id == id) return s;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Built-in scenario registry

namespace {

const char* kMotivating = R"JSON({
  "id": "motivating",
  "description": "Fairness-style hiring chain: treatment feeds the covariate and the outcome, so the identified CATE (direct effect) and the structural CATE (total effect) split.",
  "parameters": {"alpha": 1.0, "beta": 2.0},
  "model": {
    "noises": [
      {"name": "U_T", "dist": "bernoulli", "p": 0.5},
      {"name": "U_X", "dist": "gaussian", "mean": 0, "var": 1},
      {"name": "U_Y", "dist": "gaussian", "mean": 0, "var": 1}
    ],
    "equations": [
      ["T", "U_T"],
      ["X", "alpha*T + U_X"],
      ["Y", "X + beta*T + U_Y"]
    ],
    "treatment": "T",
    "covariates": ["X"],
    "outcomes": ["Y"],
    "support": [0, 1]
  },
  "expectations": [
    {"quantity": "cate_rcm", "expected": "beta", "tol": 1e-9},
    {"quantity": "cate_scm", "expected": "alpha + beta", "tol": 1e-9},
    {"quantity": "direct_effect", "expected": "beta", "tol": 1e-9},
    {"quantity": "interventional_cate", "expected": "beta", "tol": 1e-9},
    {"quantity": "gap", "expected": "0", "tol": 1e-9},
    {"quantity": "assumption", "flag": "a5", "expected": "true"},
    {"quantity": "assumption", "flag": "a6", "expected": "true"},
    {"quantity": "assumption", "flag": "a7_descendant", "expected": "false"},
    {"quantity": "positivity", "expected": "holds"},
    {"quantity": "consistency", "rcm": "entailed", "expected": "holds"}
  ]
})JSON";

const char* kProp2 = R"JSON({
  "id": "prop2",
  "description": "Binary treatment feeding covariate and outcome, with two hand-built potential-outcome constructions: one satisfying cross-outcome ignorability, one only single-outcome ignorability. Identified and structural means split.",
  "parameters": {},
  "model": {
    "noises": [
      {"name": "U_T", "dist": "bernoulli", "p": 0.5},
      {"name": "U_X", "dist": "gaussian", "mean": 0, "var": 1},
      {"name": "U_Y", "dist": "gaussian", "mean": 0, "var": 1}
    ],
    "equations": [
      ["T", "U_T"],
      ["X", "T + U_X"],
      ["Y", "T + X + U_Y"]
    ],
    "treatment": "T",
    "covariates": ["X"],
    "outcomes": ["Y"],
    "support": [0, 1]
  },
  "rcm": [
    {"name": "cross_construction",
     "po": ["(1-T)*(X+U_Y) + T*(X-U_Y)",
            "(1-T)*(1+X-U_Y) + T*(1+X+U_Y)"]},
    {"name": "single_construction",
     "po": ["X + U_Y",
            "(1-T)*(1+X-U_Y) + T*(1+X+U_Y)"]}
  ],
  "expectations": [
    {"quantity": "mean_po", "t": 0, "expected": "0.5", "tol": 1e-9},
    {"quantity": "mean_po", "t": 1, "expected": "1.5", "tol": 1e-9},
    {"quantity": "mean_do", "t": 0, "expected": "0", "tol": 1e-9},
    {"quantity": "mean_do", "t": 1, "expected": "2", "tol": 1e-9},
    {"quantity": "ate_po", "expected": "1", "tol": 1e-9},
    {"quantity": "ate_do", "expected": "2", "tol": 1e-9},
    {"quantity": "positivity", "expected": "holds"},
    {"quantity": "consistency", "rcm": "cross_construction", "expected": "holds"},
    {"quantity": "consistency", "rcm": "single_construction", "expected": "holds"},
    {"quantity": "ignorability", "mode": "cross", "rcm": "cross_construction", "expected": "holds"},
    {"quantity": "ignorability", "mode": "single", "rcm": "single_construction", "expected": "holds"},
    {"quantity": "ignorability", "mode": "cross", "rcm": "single_construction", "expected": "fails"}
  ]
})JSON";

const char* kRemark4 = R"JSON({
  "id": "remark4",
  "description": "The cross-outcome counterexample: the hand-built potential outcomes and the outcome-equation counterfactuals agree on every single-outcome law yet differ jointly.",
  "parameters": {},
  "model": {
    "noises": [
      {"name": "U_T", "dist": "bernoulli", "p": 0.5},
      {"name": "U_X", "dist": "gaussian", "mean": 0, "var": 1},
      {"name": "U_Y", "dist": "gaussian", "mean": 0, "var": 1}
    ],
    "equations": [
      ["T", "U_T"],
      ["X", "T + U_X"],
      ["Y", "T + X + U_Y"]
    ],
    "treatment": "T",
    "covariates": ["X"],
    "outcomes": ["Y"],
    "support": [0, 1]
  },
  "rcm": [
    {"name": "cross_construction",
     "po": ["(1-T)*(X+U_Y) + T*(X-U_Y)",
            "(1-T)*(1+X-U_Y) + T*(1+X+U_Y)"]}
  ],
  "expectations": [
    {"quantity": "equivalence", "level": "single", "a": "cross_construction", "b": "outcome_equation", "expected": "Equal"},
    {"quantity": "equivalence", "level": "cross", "a": "cross_construction", "b": "outcome_equation", "expected": "NotEqual"}
  ]
})JSON";

const char* kCor1 = R"JSON({
  "id": "cor1",
  "description": "No posttreatment covariate: the flipped-noise potential outcomes are single-outcome equivalent to the entailed counterfactuals but not cross-outcome equivalent.",
  "parameters": {},
  "model": {
    "noises": [
      {"name": "U_T", "dist": "bernoulli", "p": 0.5},
      {"name": "U_X", "dist": "gaussian", "mean": 0, "var": 1},
      {"name": "U_Y", "dist": "gaussian", "mean": 0, "var": 1}
    ],
    "equations": [
      ["T", "U_T"],
      ["X", "U_X"],
      ["Y", "T + X + U_Y"]
    ],
    "treatment": "T",
    "covariates": ["X"],
    "outcomes": ["Y"],
    "support": [0, 1]
  },
  "rcm": [
    {"name": "flip",
     "po": ["(1-T)*(X+U_Y) + T*(X-U_Y)",
            "(1-T)*(1+X-U_Y) + T*(1+X+U_Y)"]}
  ],
  "expectations": [
    {"quantity": "equivalence", "level": "single", "a": "flip", "b": "entailed", "expected": "Equal"},
    {"quantity": "equivalence", "level": "cross", "a": "flip", "b": "entailed", "expected": "NotEqual"},
    {"quantity": "assumption", "flag": "a5", "expected": "true"},
    {"quantity": "assumption", "flag": "a6", "expected": "true"},
    {"quantity": "assumption", "flag": "a7_descendant", "expected": "true"},
    {"quantity": "cate_rcm", "expected": "1", "tol": 1e-9},
    {"quantity": "cate_scm", "expected": "1", "tol": 1e-9},
    {"quantity": "positivity", "expected": "holds"},
    {"quantity": "consistency", "rcm": "flip", "expected": "holds"}
  ]
})JSON";

const char* kSmoking = R"JSON({
  "id": "smoking",
  "description": "Smoking, gene expression and blood pressure: a pretreatment and a posttreatment covariate. The identified CATE keeps only the direct effect while the structural CATE propagates through blood pressure.",
  "parameters": {"alpha": 1.0, "beta": -1.0, "gamma": -1.0},
  "model": {
    "noises": [
      {"name": "U_T", "dist": "gaussian", "mean": 0, "var": 1},
      {"name": "U_1", "dist": "gaussian", "mean": 0, "var": 1},
      {"name": "U_2", "dist": "gaussian", "mean": 0, "var": 1},
      {"name": "U_Y", "dist": "gaussian", "mean": 0, "var": 1}
    ],
    "equations": [
      ["X1", "U_1"],
      ["T", "indicator(X1 + U_T > 0)"],
      ["X2", "alpha*T + U_2"],
      ["Y", "gamma*X1 - X2 + beta*T + U_Y"]
    ],
    "treatment": "T",
    "covariates": ["X1", "X2"],
    "outcomes": ["Y"],
    "support": [0, 1]
  },
  "expectations": [
    {"quantity": "cate_rcm", "expected": "beta", "tol": 1e-9},
    {"quantity": "cate_scm", "expected": "-alpha + beta", "tol": 1e-9},
    {"quantity": "direct_effect", "expected": "beta", "tol": 1e-9},
    {"quantity": "assumption", "flag": "a5", "expected": "true"},
    {"quantity": "assumption", "flag": "a6", "expected": "true"},
    {"quantity": "assumption", "flag": "a7_parent", "expected": "false"},
    {"quantity": "positivity", "expected": "holds"}
  ]
})JSON";

const char* kProp1 = R"JSON({
  "id": "prop1",
  "description": "Potential outcomes shifted off the factual stratum: consistency still holds, yet the construction is equivalent to the entailed counterfactuals in none of the three senses.",
  "parameters": {"alpha": 1.0, "beta": 2.0, "y_shift": 1.0},
  "model": {
    "noises": [
      {"name": "U_T", "dist": "bernoulli", "p": 0.5},
      {"name": "U_X", "dist": "gaussian", "mean": 0, "var": 1},
      {"name": "U_Y", "dist": "gaussian", "mean": 0, "var": 1}
    ],
    "equations": [
      ["T", "U_T"],
      ["X", "alpha*T + U_X"],
      ["Y", "X + beta*T + U_Y"]
    ],
    "treatment": "T",
    "covariates": ["X"],
    "outcomes": ["Y"],
    "support": [0, 1]
  },
  "rcm": [
    {"name": "shifted",
     "po": ["(1-T)*Y + T*(U_X + U_Y + y_shift)",
            "T*Y + (1-T)*(alpha + beta + U_X + U_Y + y_shift)"]}
  ],
  "expectations": [
    {"quantity": "consistency", "rcm": "shifted", "expected": "holds"},
    {"quantity": "equivalence", "level": "as", "a": "shifted", "b": "entailed", "expected": "NotEqual"},
    {"quantity": "equivalence", "level": "cross", "a": "shifted", "b": "entailed", "expected": "NotEqual"},
    {"quantity": "equivalence", "level": "single", "a": "shifted", "b": "entailed", "expected": "NotEqual"}
  ]
})JSON";

const char* kRemark8 = R"JSON({
  "id": "remark8",
  "description": "Motivating chain with the outcome reusing the covariate noise: the identified CATE deviates from the direct coefficient by the conditional noise gap.",
  "parameters": {"alpha": 1.0, "beta": 2.0},
  "model": {
    "noises": [
      {"name": "U_T", "dist": "bernoulli", "p": 0.5},
      {"name": "U_X", "dist": "gaussian", "mean": 0, "var": 1}
    ],
    "equations": [
      ["T", "U_T"],
      ["X", "alpha*T + U_X"],
      ["Y", "X + beta*T + U_X"]
    ],
    "treatment": "T",
    "covariates": ["X"],
    "outcomes": ["Y"],
    "support": [0, 1]
  },
  "expectations": [
    {"quantity": "gap", "expected": "-alpha", "tol": 1e-9},
    {"quantity": "cate_rcm", "expected": "beta - alpha", "tol": 1e-9},
    {"quantity": "cate_scm", "expected": "alpha + beta", "tol": 1e-9},
    {"quantity": "assumption", "flag": "a6", "expected": "false"}
  ]
})JSON";

}  // namespace

std::vector<Scenario> builtin_scenarios() {
  std::vector<Scenario> out;
  for (const char* text : {kMotivating, kProp2, kRemark4, kCor1, kSmoking, kProp1, kRemark8}) {
    out.push_back(scenario_from_json(text, "builtin"));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

struct EvalContext {
  const Scenario& scenario;
  const ScmModel& model;
  const std::map<std::string, double>& params;
  const std::map<std::string, double>& overrides;
  Engine engine;
  McBudget budget;
};

double eval_expected(const std::string& text, const std::map<std::string, double>& params) {
  const Expression e = Expression::parse(text, params);
  return e.eval([&](const std::string& name) -> double {
    throw UnknownReference("expected-value expression references '" + name + "'");
  });
}

std::string x_label(const Eigen::VectorXd& x) {
  std::string s;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += (i ? ";" : "") + fmt(x(i));
  return s;
}

// Numeric grid quantities -> rows per grid point.
void eval_grid_quantity(const EvalContext& ctx, const Expectation& ex, Engine engine,
                        std::vector<ReportRow>& rows) {
  const ObservationalView obs(ctx.model);
  const auto grid = covariate_grid(obs);
  const double expected = eval_expected(ex.expected, ctx.params);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    McBudget b = ctx.budget;
    b.seed = stream_key(ctx.budget.seed, g);
    EstimandReport rep;
    if (ex.quantity == "cate_rcm") {
      rep = cate_rcm(obs, grid[g], engine, b);
    } else if (ex.quantity == "cate_scm") {
      rep = cate_scm(ctx.model, grid[g], engine, b);
    } else if (ex.quantity == "direct_effect") {
      rep = direct_effect_scm(ctx.model, grid[g], engine, b);
    } else if (ex.quantity == "interventional_cate") {
      rep = interventional_cate(ctx.model, grid[g], engine, b);
    } else if (ex.quantity == "gap") {
      rep = relaxed_noise_cate_gap(ctx.model, grid[g], engine, b);
    } else {
      throw ValidationError("unknown grid quantity " + ex.quantity);
    }
    ReportRow row;
    row.estimand = ex.quantity;
    row.x = x_label(grid[g]);
    row.computed = fmt(rep.value);
    row.se = rep.standard_error;
    row.expected = fmt(expected);
    row.tolerance = ex.tolerance;
    row.engine = engine;
    const double tol_eff =
        rep.standard_error ? std::max(ex.tolerance, 4.0 * *rep.standard_error) : ex.tolerance;
    row.pass = std::abs(rep.value - expected) <= tol_eff;
    if (rep.standard_error) row.note = "pass band 4*se";
    rows.push_back(std::move(row));
  }
}

double mean_do_value(const EvalContext& ctx, int t, Engine engine, std::optional<double>* se) {
  const auto& roles = ctx.model.roles();
  const ScmModel m_t =
      apply_do(ctx.model, Intervention::on(roles.treatment, static_cast<double>(t)));
  const std::string& y = roles.outcomes.front();
  if (engine == Engine::LinearGaussian) {
    const auto rep = mixture_rep(m_t);
    if (!rep) throw EngineInapplicable("intervened model outside the linear-gaussian subclass");
    return rep->mean_of(y);
  }
  if (engine == Engine::ExactDiscrete) {
    const AtomTable atoms = enumerate_noise(ctx.model.noise());
    const Eigen::MatrixXd solved = solve_on(m_t, atoms.coords);
    return (atoms.probs.transpose() * solved.col(m_t.var_index(y)))(0);
  }
  const NoiseBatch batch = sample_noise(ctx.model.noise(), ctx.budget.seed, ctx.budget.n);
  const Eigen::MatrixXd solved = solve_on(m_t, batch.values);
  const Eigen::VectorXd col = solved.col(m_t.var_index(y));
  const double mean = col.mean();
  const double sd = std::sqrt((col.array() - mean).square().sum() /
                              (static_cast<double>(col.size()) * (col.size() - 1.0)));
  *se = sd;
  return mean;
}

double mean_po_value(const EvalContext& ctx, int t, Engine engine, std::optional<double>* se) {
  const ObservationalView obs(ctx.model);
  const Law law = identify_single_outcome(obs, t, engine, ctx.budget);
  const Eigen::VectorXd mean = law.mean();
  const double value = mean(mean.size() - 1);
  if (law.is_empirical()) {
    const auto& s = law.empirical_rep().sample;
    const Eigen::VectorXd col = s.col(s.cols() - 1);
    const double m = col.mean();
    *se = std::sqrt((col.array() - m).square().sum() /
                    (static_cast<double>(col.size()) * (col.size() - 1.0)));
  }
  return value;
}

void eval_scalar_quantity(const EvalContext& ctx, const Expectation& ex, Engine engine,
                          std::vector<ReportRow>& rows) {
  ReportRow row;
  row.estimand = ex.quantity + (ex.quantity == "mean_po" || ex.quantity == "mean_do"
                                    ? "(t=" + std::to_string(ex.t) + ")"
                                    : "");
  row.tolerance = ex.tolerance;
  row.engine = engine;
  const double expected = eval_expected(ex.expected, ctx.params);
  std::optional<double> se;
  double value = 0.0;
  if (ex.quantity == "mean_po") {
    value = mean_po_value(ctx, ex.t, engine, &se);
  } else if (ex.quantity == "mean_do") {
    value = mean_do_value(ctx, ex.t, engine, &se);
  } else if (ex.quantity == "ate_po") {
    const ObservationalView obs(ctx.model);
    const int d = static_cast<int>(obs.x_columns().size());
    std::optional<double> se0, se1;
    McBudget b0 = ctx.budget, b1 = ctx.budget;
    b0.seed = stream_key(ctx.budget.seed, 0);
    b1.seed = stream_key(ctx.budget.seed, 1);
    EvalContext c0{ctx.scenario, ctx.model, ctx.params, ctx.overrides, engine, b0};
    EvalContext c1{ctx.scenario, ctx.model, ctx.params, ctx.overrides, engine, b1};
    const Law l0 = identify_single_outcome(ObservationalView(ctx.model), 0, engine, b0);
    const Law l1 = identify_single_outcome(ObservationalView(ctx.model), 1, engine, b1);
    const std::vector<int> y_coord{1 + d};
    const EstimandReport r = ate(l1.marginal(y_coord), l0.marginal(y_coord));
    value = r.value;
    if (l0.is_empirical() || l1.is_empirical()) {
      (void)mean_po_value(c0, 0, engine, &se0);
      (void)mean_po_value(c1, 1, engine, &se1);
      se = std::sqrt((se0 ? *se0 * *se0 : 0.0) + (se1 ? *se1 * *se1 : 0.0));
    }
  } else if (ex.quantity == "ate_do") {
    std::optional<double> se0, se1;
    McBudget b0 = ctx.budget, b1 = ctx.budget;
    b0.seed = stream_key(ctx.budget.seed, 0);
    b1.seed = stream_key(ctx.budget.seed, 1);
    EvalContext c0{ctx.scenario, ctx.model, ctx.params, ctx.overrides, engine, b0};
    EvalContext c1{ctx.scenario, ctx.model, ctx.params, ctx.overrides, engine, b1};
    value = mean_do_value(c1, 1, engine, &se1) - mean_do_value(c0, 0, engine, &se0);
    if (se0 || se1) {
      se = std::sqrt((se0 ? *se0 * *se0 : 0.0) + (se1 ? *se1 * *se1 : 0.0));
    }
  } else {
    throw ValidationError("unknown scalar quantity " + ex.quantity);
  }
  row.computed = fmt(value);
  row.se = se;
  row.expected = fmt(expected);
  const double tol_eff = se ? std::max(ex.tolerance, 4.0 * *se) : ex.tolerance;
  row.pass = std::abs(value - expected) <= tol_eff;
  if (se) row.note = "pass band 4*se";
  rows.push_back(std::move(row));
}

void eval_verdict_quantity(const EvalContext& ctx, const Expectation& ex, Engine engine,
                           std::vector<ReportRow>& rows) {
  ReportRow row;
  row.tolerance = 0.0;
  row.engine = engine;
  row.expected = ex.expected;
  std::string computed;
  std::string note;
  if (ex.quantity == "consistency") {
    const FunctionalRcm rcm = ctx.scenario.instantiate_rcm(ex.rcm, ctx.model, ctx.overrides);
    const Engine eng = engine == Engine::ExactDiscrete ? Engine::ExactDiscrete
                                                       : Engine::MonteCarlo;
    const CheckReport rep = check_consistency(rcm, ctx.budget, eng);
    row.engine = eng;
    computed = rep.holds ? "holds" : "fails";
    row.estimand = "consistency(" + (ex.rcm.empty() ? "entailed" : ex.rcm) + ")";
  } else if (ex.quantity == "positivity") {
    const ObservationalView obs(ctx.model);
    const CheckReport rep = check_positivity(obs, engine, ctx.budget);
    computed = rep.holds ? "holds" : "fails";
    row.estimand = "positivity";
  } else if (ex.quantity == "ignorability") {
    const FunctionalRcm rcm = ctx.scenario.instantiate_rcm(ex.rcm, ctx.model, ctx.overrides);
    const IgnorabilityMode mode =
        ex.mode == "cross" ? IgnorabilityMode::Cross : IgnorabilityMode::Single;
    const CheckReport rep = check_ignorability(rcm, mode, engine, ctx.budget);
    computed = rep.holds ? "holds" : "fails";
    row.estimand = "ignorability(" + ex.mode + "," + ex.rcm + ")";
  } else if (ex.quantity == "equivalence") {
    const FunctionalRcm a = ctx.scenario.instantiate_rcm(ex.rcm, ctx.model, ctx.overrides);
    const FunctionalRcm b = ctx.scenario.instantiate_rcm(ex.rcm_b, ctx.model, ctx.overrides);
    EquivalenceVerdict v;
    if (ex.level == "as") {
      v = compare_almost_sure(a, b, ctx.budget);
    } else if (ex.level == "cross") {
      v = compare_cross_outcome(a, b, ctx.budget);
    } else {
      v = compare_single_outcome(a, b, ctx.budget);
    }
    computed = verdict_name(v.verdict);
    if (!v.witness.empty()) note = v.witness;
    row.estimand = "equivalence(" + ex.level + "," + ex.rcm + " vs " + ex.rcm_b + ")";
  } else if (ex.quantity == "assumption") {
    const AssumptionFlags flags = check_assumptions(ctx.model);
    bool value = false;
    if (ex.flag == "a5") value = flags.outcome_a5;
    else if (ex.flag == "a6") value = flags.indep_noises_a6;
    else if (ex.flag == "a7_parent") value = flags.no_posttreatment_a7_parent;
    else if (ex.flag == "a7_descendant") value = flags.no_posttreatment_a7_descendant;
    else if (ex.flag == "acyclic") value = flags.acyclic;
    else throw ValidationError("unknown assumption flag " + ex.flag);
    computed = value ? "true" : "false";
    row.estimand = "assumption(" + ex.flag + ")";
  } else {
    throw ValidationError("unknown verdict quantity " + ex.quantity);
  }
  row.computed = computed;
  row.pass = computed == ex.expected;
  row.note = note;
  rows.push_back(std::move(row));
}

bool is_grid_quantity(const std::string& q) {
  return q == "cate_rcm" || q == "cate_scm" || q == "direct_effect" ||
         q == "interventional_cate" || q == "gap";
}

bool is_scalar_quantity(const std::string& q) {
  return q == "mean_po" || q == "mean_do" || q == "ate_po" || q == "ate_do";
}

std::vector<Engine> engine_order(Engine requested) {
  std::vector<Engine> order{requested};
  for (Engine e : {Engine::ExactDiscrete, Engine::LinearGaussian, Engine::MonteCarlo}) {
    if (e != requested) order.push_back(e);
  }
  return order;
}

}  // namespace

bool Report::all_pass() const {
  for (const auto& r : rows) {
    if (!r.pass) return false;
  }
  return true;
}

std::string Report::to_csv() const {
  std::ostringstream os;
  os << "scenario,estimand,x,value,se,engine,seed,expected,tolerance,status\n";
  for (const auto& r : rows) {
    os << scenario_id << ',' << r.estimand << ',' << r.x << ',' << r.computed << ','
       << (r.se ? fmt(*r.se) : "") << ',' << engine_name(r.engine) << ',' << seed << ','
       << r.expected << ',' << fmt(r.tolerance) << ',' << (r.pass ? "pass" : "fail") << '\n';
  }
  return os.str();
}

std::string Report::to_markdown() const {
  std::ostringstream os;
  os << "# scenario `" << scenario_id << "`\n\n";
  os << "seed " << seed << ", engine `" << engine_name(engine) << "`, n=" << n << ", wall "
     << fmt(wall_seconds) << " s\n\n";
  os << "| estimand | x | computed | se | expected | tol | status | note |\n";
  os << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    os << "| " << r.estimand << " | " << r.x << " | " << r.computed << " | "
       << (r.se ? fmt(*r.se) : "-") << " | " << r.expected << " | " << fmt(r.tolerance) << " | "
       << (r.pass ? "pass" : "FAIL") << " | " << r.note << " |\n";
  }
  os << "\n" << (all_pass() ? "all expectations pass" : "SOME EXPECTATIONS FAIL") << "\n";
  return os.str();
}

Report run_scenario(const Scenario& s, std::uint64_t seed, Engine engine, long n,
                    const std::map<std::string, double>& param_overrides) {
  const auto t0 = std::chrono::steady_clock::now();
  Report report;
  report.scenario_id = s.id;
  report.seed = seed;
  report.engine = engine;
  report.n = n;

  const auto params = s.merged_parameters(param_overrides);
  const ScmModel model = s.instantiate(param_overrides);
  const auto seeds = split_stream(seed, static_cast<int>(s.expectations.size()));

  for (std::size_t i = 0; i < s.expectations.size(); ++i) {
    const Expectation& ex = s.expectations[i];
    McBudget budget;
    budget.seed = seeds[i];
    budget.n = n;
    EvalContext ctx{s, model, params, param_overrides, engine, budget};

    std::vector<ReportRow> rows;
    std::string failure;
    bool done = false;
    for (Engine eng : engine_order(engine)) {
      try {
        rows.clear();
        if (is_grid_quantity(ex.quantity)) {
          eval_grid_quantity(ctx, ex, eng, rows);
        } else if (is_scalar_quantity(ex.quantity)) {
          eval_scalar_quantity(ctx, ex, eng, rows);
        } else {
          eval_verdict_quantity(ctx, ex, eng, rows);
        }
        if (eng != engine) {
          for (auto& r : rows) {
            r.note += (r.note.empty() ? "" : "; ");
            r.note += std::string("fell back to ") + engine_name(eng);
          }
        }
        done = true;
        break;
      } catch (const EngineInapplicable& e) {
        failure = e.what();
        continue;
      } catch (const NotEnumerable& e) {
        failure = e.what();
        continue;
      } catch (const Error& e) {
        // Surface per-expectation errors as failing rows, never abort the run.
        ReportRow row;
        row.estimand = ex.quantity;
        row.computed = "error";
        row.expected = ex.expected;
        row.pass = false;
        row.engine = eng;
        row.note = e.what();
        rows = {row};
        done = true;
        break;
      }
    }
    if (!done) {
      ReportRow row;
      row.estimand = ex.quantity;
      row.computed = "error";
      row.expected = ex.expected;
      row.pass = false;
      row.engine = engine;
      row.note = "no applicable engine: " + failure;
      rows = {row};
    }
    for (auto& r : rows) report.rows.push_back(std::move(r));
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace cfl
