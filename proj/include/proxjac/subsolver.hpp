#pragma once

#include <functional>
#include <optional>
#include <string>

#include "proxjac/auglag.hpp"
#include "proxjac/model.hpp"

namespace proxjac {

enum class SolveStatus { Converged, IterationCap, NumericalFailure };

const char* to_string(SolveStatus s);

enum class SolverKind { Auto, QuadraticExact, BoxPG, EqualityALM };

const char* to_string(SolverKind k);

struct SolverOptions {
  double tol = 1e-9;
  int max_iters = 500;      // projected-gradient iterations per call
  int alm_max_rounds = 60;  // multiplier updates in solve_equality_alm
  double alm_sigma0 = 10.0;
  double alm_sigma_cap = 1e12;
  bool alm_inner_newton = true;  // inner problems by solve_box_newton instead of solve_box_pg
};

/// One local solve of a block subproblem. The objective is supplied as
/// callbacks so the same solvers handle the inner penalty subproblems of
/// solve_equality_alm.
struct BlockSolveRequest {
  int t = 0;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  /// Present when the objective is 1/2 x^T H x + h^T x + const.
  std::optional<BlockObjective::QuadraticForm> quadratic;
  const ConstraintSet* set = nullptr;
  Vec warm_start;
  /// Initial equality multipliers (e.g. from the previous outer iteration).
  std::optional<Vec> mu_warm;
  SolverOptions options;
};

struct BlockSolveResult {
  Vec x;
  Vec mu;  // equality multipliers; empty for box-only sets
  SolveStatus status = SolveStatus::Converged;
  int inner_iterations = 0;
  double pg_norm = 0.0;  // box: projected-gradient inf-norm; equalities: of the penalty subproblem
  double eq_violation = 0.0;
  SolverKind solver = SolverKind::Auto;
};

/// Builds a request around a BlockObjective. The objective must outlive the
/// request.
BlockSolveRequest make_request(const BlockObjective& obj, const Vec& warm_start, const SolverOptions& opts);

Vec project_box(const Vec& x, const Vec& lower, const Vec& upper);

/// inf-norm of x - P(x - g).
double projected_gradient_norm(const Vec& x, const Vec& g, const Vec& lower, const Vec& upper);

/// Newton step on an unconstrained quadratic; NumericalFailure when H is not
/// positive definite.
BlockSolveResult solve_quadratic_exact(const BlockSolveRequest& req);

/// Monotone projected gradient with Barzilai-Borwein initial steps and
/// Armijo backtracking along the projection arc.
BlockSolveResult solve_box_pg(const BlockSolveRequest& req);

/// Projected Newton over the box: Newton directions on coordinates away from
/// active bounds (Hessian from req.quadratic or central differences of the
/// gradient, eigenvalues reflected and floored), scaled gradient steps on the
/// rest, Armijo along the projection arc. Falls back to a projected-gradient
/// step when no Newton step is accepted.
BlockSolveResult solve_box_newton(const BlockSolveRequest& req);

/// Augmented-Lagrangian loop on the equalities, inner problems solved by
/// solve_box_newton (or solve_box_pg) over the bounds.
BlockSolveResult solve_equality_alm(const BlockSolveRequest& req);

/// Deterministic routing: quadratic-exact for unconstrained quadratics (falls
/// back to box-pg on failure), box-pg for box-only sets, equality-alm otherwise.
SolverKind route(const BlockSolveRequest& req);
BlockSolveResult dispatch(const BlockSolveRequest& req, SolverKind forced = SolverKind::Auto);

}  // namespace proxjac
