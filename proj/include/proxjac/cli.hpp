#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>

namespace proxjac::cli {

/// Process exit codes of every command.
enum ExitCode : int {
  kOk = 0,
  kIoError = 1,            // unreadable input, malformed JSON/CSV, schema errors, bad flags
  kIterationCap = 2,
  kNumericalFailure = 3,
  kInvalidProblem = 4,     // validate found errors
  kCheckFailed = 5,        // trace-check found a violated property
};

struct SolveOptions {
  std::string problem_path;
  std::string config_path;    // optional tuner config file
  std::string solution_path;  // optional
  std::string trace_path;     // optional
  std::optional<double> eps;
  std::optional<int> max_iters;
  int workers = 0;
  bool fixed_params = false;
  std::optional<double> rho, theta, tau_x, tau_z;  // fixed-parameter overrides
  std::map<std::string, double> tuner_overrides;   // TunerConfig field -> value
  bool timing = true;  // false writes 0 in the wall-clock trace columns
};

int cmd_solve(const SolveOptions& opt, std::ostream& out, std::ostream& err);

int cmd_validate(const std::string& problem_path, std::ostream& out, std::ostream& err);

struct GenerateOptions {
  std::string kind;  // dispatch | acopf-toy | coupled-qp | split
  std::string out_path;
  std::string oracle_path;  // default: out_path with ".oracle.json"
  std::string input_path;   // split
  std::string network_path;  // acopf-toy: NetworkData JSON instead of the synthetic network
  unsigned long long seed = 1;
  int buses = 2;
  int periods = 3;
  int T = 3;
  int n = 2;
  int m = 2;
  double ramp_frac = 0.3;
  double load_scale = 1.0;
  double objective_scale = 1.0;
};

int cmd_generate(const GenerateOptions& opt, std::ostream& out, std::ostream& err);

struct TraceCheckOptions {
  std::string trace_path;
  std::string problem_path;
  double identity_tol = 1e-10;
  double descent_tol = 1e-8;
};

int cmd_trace_check(const TraceCheckOptions& opt, std::ostream& out, std::ostream& err);

/// Reads PROXJACOBI_LOG (error | info | debug; default error) and configures
/// the logger. Unknown values fall back to error.
void configure_logging();

}  // namespace proxjac::cli
