#include <cmath>

#include "doctest.h"
#include "proxjac/algebra.hpp"
#include "proxjac/problems.hpp"
#include "proxjac/tuner.hpp"

using namespace proxjac;

namespace {

TraceRecord metrics(double dphi, double phi, double p_inf, double d_inf, double coupling) {
  TraceRecord r;
  r.dphi = dphi;
  r.phi = phi;
  r.p_inf = p_inf;
  r.d_inf = d_inf;
  r.coupling_inf = coupling;
  return r;
}

void check_params(const Params& got, double rho, double theta, double tau_x, double tau_z) {
  CHECK(got.rho == doctest::Approx(rho));
  CHECK(got.theta == doctest::Approx(theta));
  CHECK(got.tau_x == doctest::Approx(tau_x));
  CHECK(got.tau_z == doctest::Approx(tau_z));
}

}  // namespace

TEST_CASE("init_params") {
  TunerConfig c;
  c.eps = 1e-3;
  c.rho0 = 1e-3;
  c.kappa_x = 2.0;
  c.kappa_z = 1.0 / 32.0;
  const TunerState s = init_params(c);
  check_params(s.params, 1e-3, 1e6, 2e-3, 3.125e-5);
  CHECK(s.psi == 0);
  c.eps = 0.5;
  CHECK(init_params(c).params.theta == 4.0);
}

TEST_CASE("single-rule examples") {
  TunerConfig c;
  c.eps = 1e-3;
  SUBCASE("tau_x growth is capped by (2T-1) rho") {
    TunerState s = init_params(c);
    s.params = Params{10.0, 1e6, 1.0, 0.5};
    tune_step(s, metrics(1.0, 1.0, 1.0, 1.0, 1.0), 3, c);
    CHECK(s.params.tau_x == 2.0);
    s.params.tau_x = 40.0;
    tune_step(s, metrics(1.0, 1.0, 1.0, 1.0, 1.0), 3, c);
    CHECK(s.params.tau_x == 50.0);
  }
  SUBCASE("theta grows when the penalty problem is solved but Ax = b is not") {
    TunerState s = init_params(c);
    const Params before = s.params;
    tune_step(s, metrics(0.0, 1.0, 1e-9, 1e-9, 1e-2), 3, c);
    CHECK(s.params.theta == doctest::Approx(1e7));
    CHECK(s.params.rho == before.rho);
    CHECK(s.params.tau_x == before.tau_x);
    CHECK(s.params.tau_z == before.tau_z);
  }
  SUBCASE("rho decrease stops at the cap") {
    TunerState s = init_params(c);
    s.psi = c.psi_cap;
    const Params before = s.params;
    tune_step(s, metrics(0.0, 1.0, 1e-2, 1.0, 1.0), 3, c);
    CHECK(s.params == before);
    CHECK(s.psi == c.psi_cap);
  }
}

TEST_CASE("scripted trajectory through every branch") {
  TunerConfig c;
  c.eps = 1e-3;
  c.rho0 = 1.0;
  c.kappa_x = 2.0;
  c.kappa_z = 0.5;
  c.psi_cap = 1;
  TunerState s = init_params(c);
  check_params(s.params, 1.0, 1e6, 2.0, 0.5);

  // 1: Phi rose, residuals balanced.
  CHECK_FALSE(tune_step(s, metrics(1.0, 10.0, 1.0, 1.0, 1.0), 3, c).stop);
  check_params(s.params, 1.0, 1e6, 4.0, 0.5);
  // 2: tau_x hits (2T-1) rho = 5.
  tune_step(s, metrics(1.0, 10.0, 1.0, 1.0, 1.0), 3, c);
  check_params(s.params, 1.0, 1e6, 5.0, 0.5);
  // 3: primal dominates, rho doubles, taus rescale.
  tune_step(s, metrics(-1.0, 10.0, 1.0, 0.01, 1.0), 3, c);
  check_params(s.params, 2.0, 1e6, 4.0, 1.0);
  // 4: penalty solved, coupling not: theta x10.
  tune_step(s, metrics(0.0, 10.0, 1e-4, 1e-4, 1e-2), 3, c);
  check_params(s.params, 2.0, 1e7, 4.0, 1.0);
  // 5: dual dominates, rho halves, psi = 1.
  tune_step(s, metrics(0.0, 10.0, 1e-5, 1.0, 1.0), 3, c);
  check_params(s.params, 1.0, 1e7, 2.0, 0.5);
  CHECK(s.psi == 1);
  // 6: same metrics, psi at cap.
  tune_step(s, metrics(0.0, 10.0, 1e-5, 1.0, 1.0), 3, c);
  check_params(s.params, 1.0, 1e7, 2.0, 0.5);
  CHECK(s.psi == 1);
  // 7: the Phi rule runs before the rho rule and is overwritten by it.
  tune_step(s, metrics(1.0, -10.0, 1.0, 0.01, 1.0), 3, c);
  check_params(s.params, 2.0, 1e7, 4.0, 1.0);
  // 8: feasible; the theta rule needs coupling > eps.
  CHECK(tune_step(s, metrics(0.0, 10.0, 1e-4, 1e-4, 1e-3), 3, c).stop);
  check_params(s.params, 2.0, 1e7, 4.0, 1.0);
}

TEST_CASE("rho increase is clipped at omega theta and then blocked") {
  TunerConfig c;
  c.eps = 0.5;
  c.rho0 = 1.0;
  c.omega = 0.3;
  TunerState s = init_params(c);
  tune_step(s, metrics(0.0, 1.0, 1.0, 0.01, 1.0), 2, c);
  CHECK(s.params.rho == doctest::Approx(1.2));
  tune_step(s, metrics(0.0, 1.0, 1.0, 0.01, 1.0), 2, c);
  CHECK(s.params.rho == doctest::Approx(1.2));
}

TEST_CASE("zeta threshold is relative to |Phi^k|") {
  TunerConfig c;
  TunerState s = init_params(c);
  const double tx = s.params.tau_x;
  tune_step(s, metrics(0.5e-4 * 100.0, 100.0, 1.0, 1.0, 1.0), 2, c);
  CHECK(s.params.tau_x == tx);
  tune_step(s, metrics(2e-4 * 100.0, -100.0, 1.0, 1.0, 1.0), 2, c);
  CHECK(s.params.tau_x > tx);
}

TEST_CASE("config parsing and validation") {
  const TunerConfig c = parse_tuner_config("# defaults\neps = 1e-4\nPsi = 7\nkappa_x=2.5  # large\nrho0 = \"1e-5\"\n");
  CHECK(c.eps == 1e-4);
  CHECK(c.psi_cap == 7);
  CHECK(c.kappa_x == 2.5);
  CHECK(c.rho0 == 1e-5);
  CHECK(c.omega == 32.0);
  CHECK_THROWS_AS(parse_tuner_config("gamma = 1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_tuner_config("eps = abc"), std::invalid_argument);
  CHECK_THROWS_AS(parse_tuner_config("psi_cap = 1.5"), std::invalid_argument);
  CHECK_THROWS_AS(parse_tuner_config("eps"), std::invalid_argument);

  CHECK_NOTHROW(validate_tuner_config(TunerConfig{}));
  TunerConfig bad;
  bad.nu_rho = 1.0;
  CHECK_THROWS_AS(validate_tuner_config(bad), std::invalid_argument);
  bad = TunerConfig{};
  bad.eps = 1.0;
  CHECK_THROWS_AS(init_params(bad), std::invalid_argument);
  bad = TunerConfig{};
  bad.psi_cap = 0;
  CHECK_THROWS_AS(validate_tuner_config(bad), std::invalid_argument);

  const TunerConfig big = TunerConfig::large_problem();
  CHECK(big.rho0 == 1e-5);
  CHECK(big.kappa_x == 2.5);
  CHECK(big.omega == 32.0);
  CHECK(big.kappa_z == 1.0 / 32.0);
}

TEST_CASE("already-feasible start stops after one iteration") {
  Problem p;
  p.m = 1;
  p.b = Vec::Zero(1);
  BlockSpec blk;
  blk.n = 1;
  blk.objective = SmoothFunction::quadratic(sparse_from_triplets(1, 1, {{0, 0, 2.0}}), Vec::Zero(1), 0.0);
  blk.set.lower = Vec::Constant(1, -1.0);
  blk.set.upper = Vec::Constant(1, 1.0);
  blk.A = sparse_from_triplets(1, 1, {{0, 0, 1.0}});
  p.blocks = {blk, blk};
  TunerConfig c;
  c.eps = 0.5;
  const AdaptiveResult r = run_adaptive(p, c, default_initial_point(p), RunConfig{});
  CHECK(r.termination == Termination::FeasibleStop);
  CHECK(r.trace.size() == 1);
}

TEST_CASE("convex QP reaches the KKT oracle and the tuner invariants hold") {
  const auto [p, o] = gen_coupled_qp(1, 4, 3, 2);
  TunerConfig c;
  c.eps = 1e-6;
  const AdaptiveResult r = run_adaptive(p, c, default_initial_point(p), RunConfig{});
  REQUIRE(r.termination == Termination::FeasibleStop);
  double err = 0.0;
  for (int t = 0; t < p.T(); ++t) err = std::max(err, (r.state.it.x[t] - o.x_star[t]).cwiseAbs().maxCoeff());
  CHECK(err <= 1e-4);
  CHECK((couple_apply(p, r.state.it.x) - p.b).cwiseAbs().maxCoeff() <= 1e-6);

  const TunerState first = init_params(c);
  CHECK(r.trace.front().params == first.params);
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    const Params& a = r.trace[i - 1].params;
    const Params& b = r.trace[i].params;
    CHECK(b.theta >= a.theta);
    if (b.theta != a.theta) CHECK(b.theta == doctest::Approx(c.nu_theta * a.theta));
    if (b.rho > a.rho) CHECK(b.rho <= c.omega * b.theta * (1.0 + 1e-15));
    if (b.rho != a.rho) {
      CHECK(b.tau_x == c.kappa_x * b.rho);
      CHECK(b.tau_z == c.kappa_z * b.rho);
    }
  }
  CHECK(r.tuner.psi <= c.psi_cap);
}
