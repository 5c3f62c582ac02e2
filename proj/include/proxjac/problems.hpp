#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "proxjac/acopf.hpp"
#include "proxjac/model.hpp"

namespace proxjac {

struct Generator {
  int bus = 0;
  double pmin = 0.0;
  double pmax = 1.0;
  double qmin = -1.0;
  double qmax = 1.0;
  double c2 = 1.0;  // cost c2 p^2 + c1 p
  double c1 = 0.0;
  double ramp = 1.0;  // r_i, per unit time
};

struct NetworkData {
  int n_bus = 0;
  std::vector<std::vector<AdmittanceEntry>> Y;  // row i, diagonal included
  std::vector<std::vector<int>> neighbors;
  std::vector<Generator> generators;
  std::vector<std::vector<double>> load_p;  // [period][bus]
  std::vector<std::vector<double>> load_q;
  std::vector<double> vmin;
  std::vector<double> vmax;
  double delta_t = 1.0;
  double objective_scale = 1.0;

  /// Generators attached to bus i.
  std::vector<int> gens_at(int bus) const;
};

/// JSON sub-schema:
///   { "buses": [{"vmin", "vmax", "shunt_g"?, "shunt_b"?}],
///     "lines": [{"from", "to", "r", "x", "b"?}],
///     "generators": [{"bus", "pmin", "pmax", "qmin", "qmax", "c2", "c1", "ramp"}],
///     "load_p": [[per bus] per period], "load_q": [[...]],
///     "delta_t"?, "objective_scale"? }
/// Line admittances y = 1/(r + i x) are assembled into Y with
/// Y_ij = -y, Y_ii = sum y + i b/2 + shunt.
NetworkData network_from_json(const Json& j);
Json network_to_json(const NetworkData& net);

/// Synthetic network: a path of `buses` buses, a cheap ramp-limited generator
/// at bus 0 and an expensive flexible one at the last bus, loads following a
/// daily sinusoid with seeded noise over `periods` periods.
NetworkData toy_network(int buses, int periods, std::uint64_t seed = 1);

struct BalancePair {
  double c_re = 0.0;
  double c_im = 0.0;
  BalanceTerms terms;
};

/// c_i^re and c_i^im with analytic gradients (V > 0 required).
BalancePair acopf_balance(int bus, const Vec& V, const Vec& theta, const NetworkData& net);

/// Variable layout of an acopf-toy block.
struct AcopfLayout {
  int n_gen = 0;
  int n_bus = 0;
  int p(int g) const { return g; }
  int q(int g) const { return n_gen + g; }
  int v(int i) const { return 2 * n_gen + i; }
  int th(int i) const { return 2 * n_gen + n_bus + i; }
  int s(int g) const { return 2 * n_gen + 2 * n_bus + g; }
  int n() const { return 3 * n_gen + 2 * n_bus; }
};

/// Multi-period polar ACOPF. Block t holds (p, q, V, theta, s); the ramping
/// equalities p_{t+1} - p_t + s_{t+1} = r Delta couple consecutive periods.
Problem gen_acopf_toy(const NetworkData& net, int T);

/// Per-bus, per-period balance residual |sum gens - load - c| of a solution.
double acopf_balance_residual(const Problem& p, const NetworkData& net, const BlockVecs& x);

/// Multi-period dispatch with a convex demand surrogate: block t holds
/// (p_t, s_t) per generator, costs c2 p^2 + c1 p, demand sum_g p_g = D_t as
/// an affine equality, ramping rows p_{t+1} - p_t + s_{t+1} = r Delta.
/// Generator ramps are ramp_frac * pmax per unit time.
Problem gen_multiperiod_dispatch(int T, const std::vector<Generator>& generators, double ramp_frac,
                                 const std::vector<double>& profile, double delta_t = 1.0);

enum class Provenance { KktLinearSolve, GridSearch, ClosedForm };

const char* to_string(Provenance p);

struct OracleSolution {
  BlockVecs x_star;
  Vec lambda_star;
  BlockVecs mu_star;  // block equality multipliers
  double objective = 0.0;
  Provenance provenance = Provenance::KktLinearSolve;
};

/// Random strictly convex unconstrained blocks, full-row-rank coupling with
/// condition number <= 100, and the KKT solution. m <= sum n_t.
std::pair<Problem, OracleSolution> gen_coupled_qp(std::uint64_t seed, int T, int n_t, int m);

/// Direct KKT solve for quadratic blocks with affine equalities. Fixed
/// variables (lower == upper) are eliminated; every other bound must be
/// inactive at the solution.
OracleSolution kkt_reference_solve(const Problem& p);

/// KKT point of the slack-penalty problem min sum f_t + theta/2 |z|^2
/// s.t. Ax + z = b, for unconstrained quadratic blocks; lambda = -theta z.
struct PenaltyReference {
  BlockVecs x;
  Vec z;
  Vec lambda;
};
PenaltyReference penalty_reference_solve(const Problem& p, double theta);

/// sum_t min_{x_t in X_t} f_t(x_t) for quadratic blocks without equalities;
/// throws ProblemError("lower bound unavailable ...") otherwise.
double separable_lower_bound(const Problem& p);

Json oracle_to_json(const OracleSolution& o);

}  // namespace proxjac
