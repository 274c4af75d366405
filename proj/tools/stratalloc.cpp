// stratalloc: solve allocation problems, run sampling simulations and the
// acceptance suite.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "stratalloc/commands.hpp"
#include "stratalloc/verification/acceptance.hpp"

namespace {

using namespace stratalloc;

int env_workers(int fallback) {
  if (const char* w = std::getenv("STRATALLOC_WORKERS")) {
    try {
      const int v = std::stoi(w);
      if (v >= 1) return v;
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring STRATALLOC_WORKERS='" << w << "'\n";
  }
  return fallback;
}

void emit(const std::string& doc, const std::string& report_path) {
  std::cout << doc;
  if (!report_path.empty()) {
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw ValidationError("cannot write report '" + report_path + "'");
    out << doc;
  }
}

ReportFormat parse_format(const std::string& s) { return s == "json" ? ReportFormat::json : ReportFormat::text; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multivariate stratified sample allocation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(stratalloc::kVersion));

  SolveConfig solve;
  std::string solve_mode = "auto", solve_format = "text", solve_report, costs;
  std::optional<int> solve_workers;
  auto* s = app.add_subcommand("solve", "Optimal allocation for a design and budget");
  s->add_option("--data", solve.data, "Dataset path or bundled name")->required();
  s->add_option("--mode", solve_mode, "auto | summary | raw | json")->check(CLI::IsMember({"auto", "summary", "raw", "json"}));
  s->add_option("--model", solve.model, "deterministic | modified-e | e | v | p")
      ->transform(CLI::IsMember({"deterministic", "modified-e", "e", "v", "p"}, CLI::ignore_case));
  s->add_option("--value-fn", solve.value_fn, "trace | det | lambda-max | lambda-min")
      ->check(CLI::IsMember({"trace", "det", "determinant", "lambda-max", "lambda-min"}));
  s->add_option("--k1", solve.k1, "Weight of the expectation (modified-e)");
  s->add_option("--k2", solve.k2, "Weight of the standard deviation (modified-e)");
  s->add_option("--tau", solve.tau, "Aspiration level (p)");
  s->add_option("--characteristic", solve.characteristics, "Restrict the trace to these characteristics");
  auto* total = s->add_option("--total-n", solve.total_n, "Total sample size");
  auto* cost = s->add_option("--costs", costs, "Comma-separated per-unit costs c_h");
  s->add_option("--c0", solve.c0, "Fixed cost");
  auto* budget = s->add_option("--budget", solve.budget, "Total cost C");
  total->excludes(cost)->excludes(budget);
  s->add_option("--synthesize", solve.synthesize, "Synthesize fourth moments: gaussian | lognormal")
      ->check(CLI::IsMember({"gaussian", "lognormal"}));
  s->add_option("--seed", solve.seed, "Random seed")->capture_default_str();
  s->add_option("--workers", solve_workers, "Worker threads (env STRATALLOC_WORKERS)");
  s->add_option("--restarts", solve.restarts, "Random restarts")->capture_default_str();
  s->add_option("--max-nodes", solve.max_nodes, "Branch-and-bound node budget")->capture_default_str();
  s->add_option("--report", solve_report, "Also write the report to this file");
  s->add_option("--format", solve_format, "text | json")->check(CLI::IsMember({"text", "json"}));

  SimulateConfig sim;
  std::string sim_format = "text", sim_report, sim_cov;
  std::optional<int> sim_workers;
  auto* m = app.add_subcommand("simulate", "Sampling simulations on one stratum population");
  m->add_option("kind", sim.kind, "lemma1 | clt | hajek")->required()->check(CLI::IsMember({"lemma1", "clt", "hajek"}));
  m->add_option("--data", sim.data, "'synthesized' or a dataset whose stratum supplies N and the covariance")
      ->capture_default_str();
  m->add_option("--stratum", sim.stratum, "Stratum id within --data");
  m->add_option("--N", sim.N, "Population size (default 2000 or the stratum N_h)");
  m->add_option("--n", sim.n, "Sample size")->capture_default_str();
  m->add_option("--reps", sim.reps, "Replications")->capture_default_str()->check(CLI::PositiveNumber);
  m->add_option("--G", sim.G, "Characteristics when --cov is absent")->capture_default_str()->check(CLI::PositiveNumber);
  m->add_option("--cov", sim_cov, "Target covariance, vech order, comma-separated");
  m->add_option("--distribution", sim.distribution, "gaussian | lognormal")->check(CLI::IsMember({"gaussian", "lognormal"}));
  m->add_option("--lambda", sim.lambda, "canonical:a | random | comma-separated vector")->capture_default_str();
  m->add_option("--epsilon", sim.epsilon, "Threshold of the condition")->capture_default_str();
  m->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  m->add_option("--workers", sim_workers, "Worker threads (env STRATALLOC_WORKERS)");
  m->add_option("--report", sim_report, "Also write the report to this file");
  m->add_option("--format", sim_format, "text | json")->check(CLI::IsMember({"text", "json"}));

  std::vector<std::string> only;
  acceptance::Options vopts;
  std::string data_dir = vopts.data_dir.string();
  std::optional<int> verify_workers;
  auto* v = app.add_subcommand("verify", "Run the acceptance suite");
  v->add_option("--only", only, "Criterion groups or numbers (e.g. matrix-kit, solver, 7)");
  v->add_option("--data-dir", data_dir, "Directory holding table1.csv")->capture_default_str();
  v->add_option("--seed", vopts.seed, "Random seed")->capture_default_str();
  v->add_option("--workers", verify_workers, "Worker threads (env STRATALLOC_WORKERS)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s) {
      solve.mode = *parse_data_mode(solve_mode);
      solve.format = parse_format(solve_format);
      solve.workers = solve_workers.value_or(env_workers(1));
      if (!costs.empty()) solve.costs = stratalloc::detail::parse_real_list(costs, "--costs");
      emit(cmd_solve(solve), solve_report);
    } else if (*m) {
      sim.format = parse_format(sim_format);
      sim.workers = sim_workers.value_or(env_workers(1));
      if (!sim_cov.empty()) sim.cov = stratalloc::detail::parse_real_list(sim_cov, "--cov");
      emit(cmd_simulate(sim), sim_report);
    } else if (*v) {
      vopts.data_dir = data_dir;
      vopts.workers = verify_workers.value_or(env_workers(vopts.workers));
      std::vector<int> ids;
      if (only.empty()) only.push_back("all");
      for (const auto& g : only)
        for (int id : acceptance::group(g)) ids.push_back(id);
      std::cout << "seed: " << vopts.seed << "\n";
      const auto results =
          acceptance::run(vopts, ids, [](const acceptance::Result& r) { std::cout << acceptance::format_line(r) << std::endl; });
      const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed; });
      std::cout << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " criteria passed\n";
      return failed == 0 ? 0 : 1;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
