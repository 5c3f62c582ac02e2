#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "proxjac/cli.hpp"

namespace cli = proxjac::cli;

int main(int argc, char** argv) {
  cli::configure_logging();

  CLI::App app{"Distributed proximal Jacobi augmented-Lagrangian solver"};
  app.require_subcommand(1, 1);

  cli::SolveOptions solve;
  std::map<std::string, double> tuner_flags;
  auto* s = app.add_subcommand("solve", "Solve a problem with the adaptive tuner or fixed parameters");
  s->add_option("problem", solve.problem_path, "Problem JSON")->required();
  s->add_option("--config", solve.config_path, "Tuner config (key = value)");
  s->add_option("--solution", solve.solution_path, "Write solution JSON");
  s->add_option("--trace", solve.trace_path, "Write trace CSV");
  s->add_option("--eps", solve.eps, "Feasibility tolerance");
  s->add_option("--max-iters", solve.max_iters, "Outer iteration cap");
  s->add_option("--workers", solve.workers, "Worker threads for block solves (0 = inline)");
  unsigned long long solve_seed = 0;
  s->add_option("--seed", solve_seed, "Accepted for uniformity; solve draws no random numbers");
  s->add_flag("--fixed-params", solve.fixed_params, "Run with fixed parameters (default: global-convergence values at --eps)");
  s->add_option("--rho", solve.rho, "Override rho");
  s->add_option("--theta", solve.theta, "Override theta");
  s->add_option("--tau-x", solve.tau_x, "Override tau_x");
  s->add_option("--tau-z", solve.tau_z, "Override tau_z");
  bool no_timing = false;
  s->add_flag("--no-timing", no_timing, "Write 0 in the wall-clock trace columns");
  for (const auto& [flag, key] : std::map<std::string, std::string>{{"--rho0", "rho0"},
                                                                    {"--omega", "omega"},
                                                                    {"--kappa-x", "kappa_x"},
                                                                    {"--kappa-z", "kappa_z"},
                                                                    {"--zeta", "zeta"},
                                                                    {"--nu-x", "nu_x"},
                                                                    {"--nu-rho", "nu_rho"},
                                                                    {"--nu-theta", "nu_theta"},
                                                                    {"--chi", "chi"},
                                                                    {"--psi-cap", "psi_cap"}}) {
    s->add_option_function<double>(flag, [&tuner_flags, key = key](double v) { tuner_flags[key] = v; },
                                   "Tuner " + key);
  }

  std::string validate_path;
  auto* v = app.add_subcommand("validate", "Check a problem file");
  v->add_option("problem", validate_path, "Problem JSON")->required();

  cli::GenerateOptions gen;
  auto* g = app.add_subcommand("generate", "Write a generated problem (and oracle when available)");
  g->add_option("kind", gen.kind, "dispatch | acopf-toy | coupled-qp | split")->required();
  g->add_option("--out", gen.out_path, "Output problem JSON")->required();
  g->add_option("--oracle", gen.oracle_path, "Output oracle JSON");
  g->add_option("--input", gen.input_path, "Input problem for split");
  g->add_option("--network", gen.network_path, "NetworkData JSON for acopf-toy");
  g->add_option("--seed", gen.seed);
  g->add_option("--buses", gen.buses);
  g->add_option("--periods", gen.periods);
  g->add_option("--T", gen.T, "coupled-qp blocks");
  g->add_option("--n", gen.n, "coupled-qp block dimension");
  g->add_option("--m", gen.m, "coupled-qp coupling rows");
  g->add_option("--ramp-frac", gen.ramp_frac, "dispatch ramp rate as a fraction of pmax");
  g->add_option("--load-scale", gen.load_scale);
  g->add_option("--objective-scale", gen.objective_scale);

  cli::TraceCheckOptions tc;
  auto* t = app.add_subcommand("trace-check", "Re-verify a trace against its problem");
  t->add_option("trace", tc.trace_path, "Trace CSV")->required();
  t->add_option("problem", tc.problem_path, "Problem JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cli::kOk : cli::kIoError;
  }

  if (s->parsed()) {
    solve.tuner_overrides = tuner_flags;
    solve.timing = !no_timing;
    return cli::cmd_solve(solve, std::cout, std::cerr);
  }
  if (v->parsed()) return cli::cmd_validate(validate_path, std::cout, std::cerr);
  if (g->parsed()) return cli::cmd_generate(gen, std::cout, std::cerr);
  return cli::cmd_trace_check(tc, std::cout, std::cerr);
}
