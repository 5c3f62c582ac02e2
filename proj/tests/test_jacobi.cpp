#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "proxjac/algebra.hpp"
#include "proxjac/jacobi.hpp"
#include "proxjac/problems.hpp"

using namespace proxjac;

namespace {

Problem scalar_problem(double A1 = 1.0) {
  Problem p;
  p.m = 1;
  p.b = Vec::Zero(1);
  BlockSpec blk;
  blk.n = 1;
  blk.objective = SmoothFunction::quadratic(sparse_from_triplets(1, 1, {{0, 0, 1.0}}), Vec::Zero(1), 0.0);
  blk.set.lower = Vec::Constant(1, -std::numeric_limits<double>::infinity());
  blk.set.upper = Vec::Constant(1, std::numeric_limits<double>::infinity());
  blk.A = sparse_from_triplets(1, 1, {{0, 0, A1}});
  p.blocks.push_back(blk);
  return p;
}

std::string csv_of(const std::vector<TraceRecord>& trace, int T) {
  std::ostringstream os;
  write_trace_header(os, T);
  for (const auto& r : trace) write_trace_row(os, r, false);
  return os.str();
}

}  // namespace

TEST_CASE("initial dz conventions") {
  const Problem p = scalar_problem();
  const BlockVecs x0{Vec::Zero(1)};
  Params prm{1.0, 1.0, 0.0, 2.0};
  CHECK(init_state(p, x0, Vec::Constant(1, 2.0), Vec::Zero(1), prm).dz[0] == doctest::Approx(-1.0));
  CHECK(init_state(p, x0, Vec::Zero(1), Vec::Zero(1), prm).dz[0] == 0.0);
  CHECK(init_state(p, x0, Vec::Constant(1, 0.3), Vec::Constant(1, -0.3), prm).dz[0] == doctest::Approx(0.0));
}

TEST_CASE("z and lambda updates by hand") {
  const Problem p = scalar_problem();
  IterateState s;
  s.z = Vec::Ones(1);
  s.lambda = Vec::Ones(1);
  const Params prm{4.0, 2.0, 0.0, 2.0};
  const BlockVecs xk{Vec::Constant(1, 0.5)};
  const Vec z = z_update(p, xk, s, prm);
  CHECK(z[0] == doctest::Approx(-0.125));
  const Vec lam = lambda_update(p, s, xk, z, prm);
  CHECK(lam[0] == doctest::Approx(1.0 + 4.0 * (0.5 - 0.125)));

  IterateState zero;
  zero.z = Vec::Zero(1);
  zero.lambda = Vec::Zero(1);
  CHECK(z_update(p, {Vec::Zero(1)}, zero, prm)[0] == 0.0);
  CHECK(lambda_update(p, zero, {Vec::Constant(1, 0.5)}, Vec::Zero(1), Params{2.0, 1.0, 0.0, 0.0})[0] == 1.0);
  zero.lambda = Vec::Constant(1, 3.0);
  CHECK(lambda_update(p, zero, {Vec::Constant(1, 0.5)}, Vec::Constant(1, -0.5), prm)[0] == 3.0);
}

TEST_CASE("z stationarity and the multiplier identity on random inputs") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N(0.0, 1.0);
  const Problem p = gen_coupled_qp(5, 3, 2, 3).first;
  for (int trial = 0; trial < 10; ++trial) {
    const Params prm{0.5 + std::abs(N(rng)), 0.5 + std::abs(N(rng)), 1.0, 0.5 + std::abs(N(rng))};
    IterateState s;
    s.z = Vec(3);
    s.dz = Vec(3);
    for (int i = 0; i < 3; ++i) {
      s.z[i] = N(rng);
      s.dz[i] = N(rng);
    }
    // lambda^{k-1} consistent with the multiplier identity at k - 1.
    s.lambda = -prm.theta * s.z - prm.tau_z * s.dz;
    BlockVecs xk;
    for (const auto& blk : p.blocks) {
      Vec v(blk.n);
      for (int i = 0; i < blk.n; ++i) v[i] = N(rng);
      xk.push_back(v);
    }
    const Vec viol = couple_apply(p, xk) - p.b;
    const Vec z = z_update(p, xk, s, prm);
    const Vec stat = s.lambda + prm.rho * (viol + z) + prm.theta * z + prm.tau_z * (z - s.z);
    CHECK(stat.cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + s.lambda.cwiseAbs().maxCoeff() + prm.rho * viol.cwiseAbs().maxCoeff()));
    const Vec lam = lambda_update(p, s, xk, z, prm);
    const Vec lemma = lam + prm.theta * z + prm.tau_z * (z - s.z);
    CHECK(lemma.cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + lam.cwiseAbs().maxCoeff() + prm.rho * viol.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("single block unconstrained quadratic takes the exact path") {
  const Problem p = scalar_problem();
  const Params prm{1.0, 1.0, 0.0, 1.0};
  RunnerState rs = make_runner_state(p, {Vec::Constant(1, 3.0)}, Vec::Zero(1), Vec::Constant(1, 0.5), prm);
  WorkerPool pool(0);
  const XUpdate xu = x_update_all(p, rs.it, prm, RunConfig{}, pool);
  // min 1/2 x^2 + 0.5 x + 1/2 x^2  ->  x = -0.25
  CHECK(xu.x[0][0] == doctest::Approx(-0.25));
  CHECK(xu.statuses[0] == SolveStatus::Converged);
}

TEST_CASE("oracle point is a fixed point of the iteration") {
  const auto [p, o] = gen_coupled_qp(8, 3, 2, 2);
  const Params prm = convergence_params(0.1, 3);
  // Penalty problem fixed point: z = -lambda / theta.
  const PenaltyReference ref = penalty_reference_solve(p, prm.theta);
  RunnerState rs = make_runner_state(p, ref.x, ref.z, ref.lambda, prm);
  WorkerPool pool(0);
  const TraceRecord r1 = iterate(p, rs, prm, RunConfig{}, pool);
  const TraceRecord r2 = iterate(p, rs, prm, RunConfig{}, pool);
  for (int t = 0; t < p.T(); ++t) CHECK((rs.it.x[t] - ref.x[t]).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(std::abs(r2.dphi) <= 1e-9 * (1.0 + std::abs(r2.phi)));
  CHECK(r2.dx_sq <= 1e-18);
  CHECK(r1.coupling_inf == doctest::Approx(r2.coupling_inf));
}

TEST_CASE("serial and parallel sweeps are bitwise identical") {
  const Problem p = gen_coupled_qp(12, 4, 3, 3).first;
  const Params prm{2.0, 5.0, 12.0, 1.0};
  const InitialPoint init = default_initial_point(p);
  RunConfig serial;
  serial.max_iters = 30;
  RunConfig par = serial;
  par.workers = 4;
  const RunResult a = run_fixed(p, prm, init, serial);
  const RunResult b = run_fixed(p, prm, init, par);
  CHECK(csv_of(a.trace, 4) == csv_of(b.trace, 4));
  for (int t = 0; t < 4; ++t) CHECK(a.state.it.x[t] == b.state.it.x[t]);
}

TEST_CASE("block permutation permutes the iterates") {
  const Problem p = gen_coupled_qp(13, 3, 2, 2).first;
  Problem q = p;
  std::swap(q.blocks[0], q.blocks[2]);
  const Params prm{1.0, 4.0, 5.0, 0.5};
  RunConfig rc;
  rc.max_iters = 10;
  const RunResult a = run_fixed(p, prm, default_initial_point(p), rc);
  const RunResult b = run_fixed(q, prm, default_initial_point(q), rc);
  CHECK((a.state.it.x[0] - b.state.it.x[2]).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((a.state.it.x[1] - b.state.it.x[1]).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((a.state.it.lambda - b.state.it.lambda).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("trajectory identities and Lyapunov recomputation") {
  const auto [p, o] = gen_coupled_qp(2, 2, 2, 2);
  const Params prm = convergence_params(0.1, 2);
  RunnerState rs = make_runner_state(p, default_initial_point(p).x0, Vec::Zero(2), Vec::Zero(2), prm);
  WorkerPool pool(0);
  for (int k = 1; k <= 50; ++k) {
    const IterateState before = rs.it;
    const TraceRecord r = iterate(p, rs, prm, RunConfig{}, pool);
    CHECK(r.k == k);
    CHECK(r.mult_res <= 1e-10);
    CHECK(r.dlambda_res <= 1e-10);
    CHECK(r.p_dlambda_res <= 1e-10);
    CHECK(r.zstat_res <= 1e-10);
    const double phi = lyapunov(p, rs.it.x, rs.it.z, rs.it.lambda, before.x, before.z, prm);
    CHECK(std::abs(r.phi - phi) <= 1e-10 * (1.0 + std::abs(phi)));
    CHECK(r.dphi <= 1e-8 * (1.0 + std::abs(r.phi)));
    const Vec dlam = rs.it.lambda - before.lambda;
    const Vec pk = couple_apply(p, rs.it.x) + rs.it.z - p.b;
    CHECK((pk - dlam / prm.rho).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + dlam.cwiseAbs().maxCoeff() / prm.rho));
    // Delta lambda recursion with constant parameters.
    const Vec rec = -(prm.theta + prm.tau_z) * rs.it.dz + prm.tau_z * rs.it.dz_prev;
    CHECK((dlam - rec).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + rs.it.lambda.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("run_fixed with no iterations returns the initial point") {
  const Problem p = gen_coupled_qp(1, 2, 2, 1).first;
  RunConfig rc;
  rc.max_iters = 0;
  const InitialPoint init = default_initial_point(p);
  const RunResult r = run_fixed(p, Params{1.0, 1.0, 1.0, 1.0}, init, rc);
  CHECK(r.trace.empty());
  CHECK(r.state.it.x[0] == init.x0[0]);
  CHECK(r.status == RunStatus::Completed);
}

TEST_CASE("stop predicate and sink") {
  const Problem p = gen_coupled_qp(1, 2, 2, 1).first;
  RunConfig rc;
  rc.max_iters = 500;
  int seen = 0;
  rc.sink = [&](const TraceRecord&) { ++seen; };
  rc.stop = [](const TraceRecord& r, const IterateState&) { return r.k == 7; };
  const RunResult r = run_fixed(p, Params{1.0, 1.0, 2.0, 1.0}, default_initial_point(p), rc);
  CHECK(r.status == RunStatus::Stopped);
  CHECK(r.trace.size() == 7);
  CHECK(seen == 7);
}

TEST_CASE("global-convergence parameters: Phi descends and the bounds hold for some j") {
  const auto [p, o] = gen_coupled_qp(1, 2, 2, 1);
  const Params prm = convergence_params(1e-1, 2);
  RunConfig rc;
  rc.max_iters = 200;
  const RunResult r = run_fixed(p, prm, default_initial_point(p), rc);
  REQUIRE(r.trace.size() == 200);
  for (const auto& t : r.trace) CHECK(t.dphi <= 1e-8 * (1.0 + std::abs(t.phi)));
  std::vector<double> norms;
  for (const auto& blk : p.blocks) norms.push_back(spectral_norm(blk.A));
  const ConvergenceBounds b = convergence_bounds(r.trace.front().phi, separable_lower_bound(p), r.trace.back().phi, 200,
                                           prm, norms, 2);
  bool some = false;
  for (const auto& t : r.trace) {
    bool ok = t.pi <= b.pi_bound;
    for (int i = 0; i < 2; ++i) ok = ok && t.delta[i] <= b.delta_bounds[i];
    some = some || ok;
  }
  CHECK(some);
}

TEST_CASE("no proximal term on the nonconvex toy raises Phi above Phi^1") {
  NetworkData net = toy_network(2, 3, 1);
  for (auto& row : net.load_p) for (double& v : row) v *= 2.0;
  for (auto& row : net.load_q) for (double& v : row) v *= 2.0;
  net.objective_scale = 1e-3;
  const Problem p = gen_acopf_toy(net, 3);
  RunConfig rc;
  rc.max_iters = 100;
  const RunResult r = run_fixed(p, Params{1.0, 1e6, 0.0, 1.0 / 32.0}, default_initial_point(p), rc);
  REQUIRE(r.trace.size() == 100);
  bool exceeded = false;
  for (const auto& t : r.trace) exceeded = exceeded || t.phi > r.trace.front().phi;
  CHECK(exceeded);
}

TEST_CASE("block failure aborts the run") {
  Problem p = scalar_problem();
  // Concave objective: the exact solve fails and the box fallback is unbounded.
  p.blocks[0].objective = SmoothFunction::quadratic(sparse_from_triplets(1, 1, {{0, 0, -5.0}}), Vec::Zero(1), 0.0);
  RunConfig rc;
  rc.max_iters = 3;
  rc.overrides[0] = SolverKind::QuadraticExact;
  const RunResult r = run_fixed(p, Params{1.0, 1.0, 0.0, 1.0}, default_initial_point(p), rc);
  CHECK(r.status == RunStatus::BlockFailed);
  CHECK(r.failed_block == 0);
  CHECK(r.trace.empty());
}

TEST_CASE("trace CSV layout") {
  const Problem p = gen_coupled_qp(1, 2, 2, 1).first;
  RunConfig rc;
  rc.max_iters = 2;
  const RunResult r = run_fixed(p, Params{1.0, 1.0, 2.0, 1.0}, default_initial_point(p), rc);
  const auto cols = trace_columns(2);
  const std::vector<std::string> fixed{"k", "phi", "dphi", "coupling_inf", "p_inf", "d_inf", "pi", "delta_max",
                                       "rho", "theta", "tau_x", "tau_z", "t_xupd_ms", "t_zupd_ms", "inner_iters_total"};
  for (std::size_t i = 0; i < fixed.size(); ++i) CHECK(cols[i] == fixed[i]);
  CHECK(cols.back() == "delta_2");
  const std::string csv = csv_of(r.trace, 2);
  std::istringstream in(csv);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) == cols.size() - 1);
  }
  CHECK(lines == 3);
}
