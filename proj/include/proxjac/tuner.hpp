#pragma once

#include <string>

#include "proxjac/jacobi.hpp"
#include "proxjac/model.hpp"

namespace proxjac {

struct TunerConfig {
  double eps = 1e-3;
  double rho0 = 1e-3;
  double omega = 32.0;
  double kappa_x = 2.0;
  double kappa_z = 1.0 / 32.0;
  double zeta = 1e-4;
  int psi_cap = 100;
  double nu_x = 2.0;
  double nu_rho = 2.0;
  double nu_theta = 10.0;
  double chi = 10.0;
  int max_iters = 10000;

  /// Experiment defaults for large instances: rho0 = 1e-5, kappa_x = 2.5.
  static TunerConfig large_problem();
};

/// Throws std::invalid_argument naming the first field out of range.
void validate_tuner_config(const TunerConfig& cfg);

struct TunerState {
  Params params;
  int psi = 0;
  int k = 0;
  double last_phi = 0.0;
  bool has_last_phi = false;
};

struct StopDecision {
  bool stop = false;
};

/// theta = eps^-2, rho = rho0, tau_x = kappa_x rho, tau_z = kappa_z rho, psi = 0.
TunerState init_params(const TunerConfig& cfg);

/// Applies the adaptation rules to the metrics of the just-finished iteration.
/// metrics.dphi is Phi^k - Phi^{k-1} as recorded.
StopDecision tune_step(TunerState& state, const TraceRecord& metrics, int T, const TunerConfig& cfg);

enum class Termination { FeasibleStop, IterationCap, BlockFailure };

const char* to_string(Termination t);

struct AdaptiveResult {
  RunnerState state;
  std::vector<TraceRecord> trace;
  Termination termination = Termination::IterationCap;
  TunerState tuner;
  int failed_block = -1;
  std::string message;
};

/// Iteration cap is cfg.max_iters; config.max_iters and config.stop are not
/// consulted.
AdaptiveResult run_adaptive(const Problem& p, const TunerConfig& cfg, const InitialPoint& init,
                            const RunConfig& config);

/// key = value lines; '#' starts a comment. Keys are the TunerConfig field
/// names. Unknown keys and malformed values throw std::invalid_argument.
TunerConfig parse_tuner_config(const std::string& text, TunerConfig base = {});
TunerConfig load_tuner_config(const std::string& path, TunerConfig base = {});

}  // namespace proxjac
