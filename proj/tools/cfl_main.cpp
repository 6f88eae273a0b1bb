#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "cfl/equivalence.hpp"
#include "cfl/errors.hpp"
#include "cfl/scenario.hpp"

namespace {

std::uint64_t default_seed() {
  if (const char* env = std::getenv("CFL_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return 1;
}

cfl::Engine parse_engine(const std::string& name) {
  if (name == "exact") return cfl::Engine::ExactDiscrete;
  if (name == "gaussian") return cfl::Engine::LinearGaussian;
  if (name == "mc") return cfl::Engine::MonteCarlo;
  throw CLI::ValidationError("--engine", "must be exact, gaussian or mc");
}

std::map<std::string, double> parse_params(const std::vector<std::string>& kvs) {
  std::map<std::string, double> out;
  for (const auto& kv : kvs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw CLI::ValidationError("--param", "expected name=value, got '" + kv + "'");
    }
    out[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
  }
  return out;
}

cfl::Scenario resolve_scenario(const std::string& ref) {
  if (auto s = cfl::find_builtin(ref)) return *s;
  return cfl::load_scenario(ref);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cfl - structural and potential-outcome counterfactuals on a shared space"};
  app.require_subcommand(1);

  auto* list_cmd = app.add_subcommand("list", "list built-in scenarios");

  std::string run_ref, engine_name = "gaussian", format = "csv", out_file;
  std::uint64_t seed = default_seed();
  long samples = 100000;
  std::vector<std::string> param_kvs;
  auto* run_cmd = app.add_subcommand("run", "run a scenario and report expectations");
  run_cmd->add_option("scenario", run_ref, "built-in id or path to a scenario file")->required();
  run_cmd->add_option("--seed", seed, "master seed (default: CFL_SEED or 1)");
  run_cmd->add_option("--engine", engine_name, "exact | gaussian | mc");
  run_cmd->add_option("--samples", samples, "Monte-Carlo draws");
  run_cmd->add_option("--param", param_kvs, "override a parameter, name=value");
  run_cmd->add_option("--format", format, "csv | md");
  run_cmd->add_option("--out", out_file, "write the report to a file");

  std::string check_ref;
  auto* check_cmd = app.add_subcommand("check", "validate a scenario file");
  check_cmd->add_option("path", check_ref, "scenario file")->required();

  std::string cmp_a, cmp_b, cmp_level = "single", cmp_rcm_a = "entailed", cmp_rcm_b = "entailed";
  std::uint64_t cmp_seed = default_seed();
  long cmp_samples = 100000;
  auto* cmp_cmd = app.add_subcommand("compare", "compare two models at an equivalence level");
  cmp_cmd->add_option("modelA", cmp_a, "built-in id or scenario file")->required();
  cmp_cmd->add_option("modelB", cmp_b, "built-in id or scenario file")->required();
  cmp_cmd->add_option("--level", cmp_level, "as | cross | single");
  cmp_cmd->add_option("--rcm-a", cmp_rcm_a, "construction name in modelA");
  cmp_cmd->add_option("--rcm-b", cmp_rcm_b, "construction name in modelB");
  cmp_cmd->add_option("--seed", cmp_seed, "seed");
  cmp_cmd->add_option("--samples", cmp_samples, "Monte-Carlo draws");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*list_cmd) {
      for (const auto& s : cfl::builtin_scenarios()) {
        std::cout << s.id << "\t" << s.description << "\n";
      }
      return 0;
    }
    if (*run_cmd) {
      const cfl::Scenario scenario = resolve_scenario(run_ref);
      const cfl::Report report = cfl::run_scenario(scenario, seed, parse_engine(engine_name),
                                                   samples, parse_params(param_kvs));
      const std::string text = format == "md" ? report.to_markdown() : report.to_csv();
      if (out_file.empty()) {
        std::cout << text;
      } else {
        std::ofstream out(out_file);
        out << text;
      }
      std::cerr << "[cfl] " << report.scenario_id << ": "
                << (report.all_pass() ? "all expectations pass" : "expectation failures") << " ("
                << report.rows.size() << " rows, " << report.wall_seconds << " s)\n";
      return report.all_pass() ? 0 : 1;
    }
    if (*check_cmd) {
      const cfl::Scenario s = cfl::load_scenario(check_ref);
      std::cout << "OK: " << s.id << " (" << s.model.equations.size() << " equations, "
                << s.model.noises.size() << " noises, " << s.expectations.size()
                << " expectations)\n";
      return 0;
    }
    if (*cmp_cmd) {
      const cfl::Scenario sa = resolve_scenario(cmp_a);
      const cfl::Scenario sb = resolve_scenario(cmp_b);
      const cfl::ScmModel ma = sa.instantiate();
      const cfl::ScmModel mb = sb.instantiate();
      const cfl::FunctionalRcm ra = sa.instantiate_rcm(cmp_rcm_a, ma);
      const cfl::FunctionalRcm rb = sb.instantiate_rcm(cmp_rcm_b, mb);
      cfl::McBudget budget;
      budget.seed = cmp_seed;
      budget.n = cmp_samples;
      cfl::EquivalenceVerdict v;
      if (cmp_level == "as") {
        v = cfl::compare_almost_sure(ra, rb, budget);
      } else if (cmp_level == "cross") {
        v = cfl::compare_cross_outcome(ra, rb, budget);
      } else if (cmp_level == "single") {
        v = cfl::compare_single_outcome(ra, rb, budget);
      } else {
        std::cerr << "unknown level " << cmp_level << "\n";
        return 2;
      }
      std::cout << "level=" << cmp_level << " verdict=" << cfl::verdict_name(v.verdict)
                << " statistic=" << v.statistic << " threshold=" << v.threshold;
      if (v.p_value) std::cout << " p=" << *v.p_value;
      if (!v.witness.empty()) std::cout << " witness=\"" << v.witness << "\"";
      std::cout << " seed=" << cmp_seed << "\n";
      return 0;
    }
  } catch (const cfl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
