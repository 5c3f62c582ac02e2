#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "proxjac/jacobi.hpp"
#include "proxjac/problems.hpp"
#include "proxjac/subsolver.hpp"

using namespace proxjac;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct QuadReq {
  DenseMat H;
  Vec h;
  ConstraintSet set;
  BlockSolveRequest req;

  QuadReq(DenseMat H_, Vec h_, Vec lo, Vec hi, Vec warm, bool expose_quadratic = true) : H(std::move(H_)), h(std::move(h_)) {
    set.lower = std::move(lo);
    set.upper = std::move(hi);
    req.value = [this](const Vec& x) { return 0.5 * x.dot(H * x) + h.dot(x); };
    req.gradient = [this](const Vec& x) { return Vec(H * x + h); };
    if (expose_quadratic) req.quadratic = BlockObjective::QuadraticForm{H, h};
    req.set = &set;
    req.warm_start = std::move(warm);
  }
  QuadReq(const QuadReq&) = delete;
};

DenseMat random_spd(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  DenseMat M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = N(rng);
  return M * M.transpose() + 0.5 * DenseMat::Identity(n, n);
}

// Minimizer of 1/2 x'Hx + h'x over a box by enumerating which coordinates sit
// at their lower bound, upper bound, or are free.
Vec active_set_oracle(const DenseMat& H, const Vec& h, const Vec& lo, const Vec& hi) {
  const int n = static_cast<int>(h.size());
  int total = 1;
  for (int i = 0; i < n; ++i) total *= 3;
  double best = kInf;
  Vec best_x;
  for (int code = 0; code < total; ++code) {
    Vec x = Vec::Zero(n);
    std::vector<int> fr;
    int c = code;
    for (int i = 0; i < n; ++i, c /= 3) {
      if (c % 3 == 0) fr.push_back(i);
      else x[i] = c % 3 == 1 ? lo[i] : hi[i];
    }
    if (!fr.empty()) {
      DenseMat Hf(fr.size(), fr.size());
      Vec rhs(fr.size());
      for (std::size_t a = 0; a < fr.size(); ++a) {
        rhs[a] = -h[fr[a]];
        for (int j = 0; j < n; ++j) {
          if (std::find(fr.begin(), fr.end(), j) == fr.end()) rhs[a] -= H(fr[a], j) * x[j];
        }
        for (std::size_t b = 0; b < fr.size(); ++b) Hf(a, b) = H(fr[a], fr[b]);
      }
      const Vec xf = Hf.ldlt().solve(rhs);
      for (std::size_t a = 0; a < fr.size(); ++a) x[fr[a]] = xf[a];
    }
    bool inside = true;
    for (int i = 0; i < n; ++i) inside = inside && x[i] >= lo[i] - 1e-12 && x[i] <= hi[i] + 1e-12;
    if (!inside) continue;
    const double v = 0.5 * x.dot(H * x) + h.dot(x);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  return best_x;
}

}  // namespace

TEST_CASE("project_box") {
  Vec lo = Vec::Zero(2), hi = Vec::Ones(2);
  Vec x(2);
  x << -1.0, 5.0;
  const Vec p = project_box(x, lo, hi);
  CHECK(p[0] == 0.0);
  CHECK(p[1] == 1.0);
  CHECK(project_box(p, lo, hi) == p);
  Vec in(2);
  in << 0.25, 0.75;
  CHECK(project_box(in, lo, hi) == in);
}

TEST_CASE("exact quadratic solve on a scalar") {
  const double lam = 0.7;
  QuadReq q(DenseMat::Identity(1, 1), Vec::Constant(1, lam), Vec::Constant(1, -kInf), Vec::Constant(1, kInf), Vec::Zero(1));
  const auto r = solve_quadratic_exact(q.req);
  CHECK(r.status == SolveStatus::Converged);
  CHECK(r.x[0] == doctest::Approx(-lam));
  CHECK(route(q.req) == SolverKind::QuadraticExact);
}

TEST_CASE("exact solve reports failure on an indefinite Hessian") {
  DenseMat H(2, 2);
  H << 1.0, 0.0, 0.0, -1.0;
  QuadReq u(H, Vec::Zero(2), Vec::Constant(2, -kInf), Vec::Constant(2, kInf), Vec::Zero(2));
  CHECK(solve_quadratic_exact(u.req).status == SolveStatus::NumericalFailure);
}

TEST_CASE("exact and projected-gradient solvers agree on random convex quadratics") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + trial % 4;
    const DenseMat H = random_spd(n, rng);
    Vec h(n);
    for (int i = 0; i < n; ++i) h[i] = N(rng);
    QuadReq a(H, h, Vec::Constant(n, -kInf), Vec::Constant(n, kInf), Vec::Zero(n));
    QuadReq b(H, h, Vec::Constant(n, -kInf), Vec::Constant(n, kInf), Vec::Zero(n), false);
    b.req.options.max_iters = 20000;
    const auto ra = solve_quadratic_exact(a.req);
    const auto rb = solve_box_pg(b.req);
    CHECK(rb.status == SolveStatus::Converged);
    CHECK((ra.x - rb.x).cwiseAbs().maxCoeff() <= 1e-7);
  }
}

TEST_CASE("projected gradient on boxes") {
  SUBCASE("(x - 2)^2 over [0, 1]") {
    QuadReq q(DenseMat::Constant(1, 1, 2.0), Vec::Constant(1, -4.0), Vec::Zero(1), Vec::Ones(1), Vec::Zero(1));
    const auto r = solve_box_pg(q.req);
    CHECK(r.x[0] == 1.0);
    CHECK(r.status == SolveStatus::Converged);
    CHECK(route(q.req) == SolverKind::BoxPG);
  }
  SUBCASE("optimal warm start returns immediately") {
    QuadReq q(DenseMat::Identity(2, 2), Vec::Zero(2), Vec::Constant(2, -1.0), Vec::Constant(2, 1.0), Vec::Zero(2));
    const auto r = solve_box_pg(q.req);
    CHECK(r.inner_iterations <= 1);
    CHECK(r.x == Vec::Zero(2));
  }
  SUBCASE("active-set enumeration oracle") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> N(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
      const int n = 1 + trial % 3;
      const DenseMat H = random_spd(n, rng);
      Vec h(n);
      for (int i = 0; i < n; ++i) h[i] = 3.0 * N(rng);
      const Vec lo = Vec::Constant(n, -1.0), hi = Vec::Constant(n, 1.0);
      QuadReq q(H, h, lo, hi, Vec::Zero(n));
      q.req.options.max_iters = 20000;
      const auto r = solve_box_pg(q.req);
      const Vec ref = active_set_oracle(H, h, lo, hi);
      CHECK((r.x - ref).cwiseAbs().maxCoeff() <= 1e-6);
      const auto rn = solve_box_newton(q.req);
      CHECK((rn.x - ref).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("warm starts slightly outside the box are clipped") {
  QuadReq q(DenseMat::Identity(1, 1), Vec::Constant(1, 5.0), Vec::Zero(1), Vec::Ones(1), Vec::Constant(1, -1e-13));
  const auto r = solve_box_pg(q.req);
  CHECK(r.x[0] == 0.0);
}

TEST_CASE("equality ALM") {
  SUBCASE("x1 - x2 = 0 with 1/2 |x|^2") {
    QuadReq q(DenseMat::Identity(2, 2), Vec::Zero(2), Vec::Constant(2, -10.0), Vec::Constant(2, 10.0), Vec::Ones(2));
    Vec a(2);
    a << 1.0, -1.0;
    q.set.equalities.push_back(SmoothFunction::affine(a, 0.0));
    CHECK(route(q.req) == SolverKind::EqualityALM);
    const auto r = solve_equality_alm(q.req);
    CHECK(r.status == SolveStatus::Converged);
    CHECK(r.x.cwiseAbs().maxCoeff() <= 1e-7);
    CHECK(std::abs(r.mu[0]) <= 1e-7);
  }
  SUBCASE("(x1 - 1)^2 + (x2 - 2)^2 with x1 = x2") {
    // KKT: [2 0 1; 0 2 -1; 1 -1 0] (x1, x2, mu) = (2, 4, 0)
    DenseMat K(3, 3);
    K << 2, 0, 1, 0, 2, -1, 1, -1, 0;
    Vec rhs(3);
    rhs << 2, 4, 0;
    const Vec sol = K.fullPivLu().solve(rhs);
    QuadReq q(2.0 * DenseMat::Identity(2, 2), Vec(Eigen::Vector2d(-2.0, -4.0)), Vec::Constant(2, -10.0),
              Vec::Constant(2, 10.0), Vec::Zero(2));
    Vec a(2);
    a << 1.0, -1.0;
    q.set.equalities.push_back(SmoothFunction::affine(a, 0.0));
    const auto r = solve_equality_alm(q.req);
    CHECK(r.x[0] == doctest::Approx(sol[0]).epsilon(1e-7));
    CHECK(r.x[1] == doctest::Approx(sol[1]).epsilon(1e-7));
    CHECK(r.mu[0] == doctest::Approx(sol[2]).epsilon(1e-6));
    CHECK(sol[0] == doctest::Approx(1.5));
    CHECK(sol[2] == doctest::Approx(-1.0));
  }
}

TEST_CASE("polar power-balance block reaches feasibility") {
  const NetworkData net = toy_network(2, 3, 1);
  const Problem p = gen_acopf_toy(net, 3);
  const auto init = default_initial_point(p);
  const Params prm{1.0, 1e3, 2.0, 1.0 / 32.0};
  for (int t = 0; t < p.T(); ++t) {
    const BlockObjective obj(p, t, init.x0, init.z0, init.lambda0, prm, init.x0[t]);
    const BlockSolveRequest req = make_request(obj, init.x0[t], SolverOptions{});
    CHECK(route(req) == SolverKind::EqualityALM);
    const auto r = dispatch(req);
    double viol = 0.0;
    for (const auto& c : p.blocks[t].set.equalities) viol = std::max(viol, std::abs(c.value(r.x)));
    CHECK(viol <= 1e-7);
    CHECK(r.status != SolveStatus::NumericalFailure);
  }
}

TEST_CASE("descent contract and determinism") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3;
    const DenseMat H = random_spd(n, rng);
    Vec h(n), w(n);
    for (int i = 0; i < n; ++i) {
      h[i] = N(rng);
      w[i] = 0.5 * N(rng);
    }
    Vec a(n);
    a << 1.0, 1.0, -1.0;
    QuadReq q(H, h, Vec::Constant(n, -2.0), Vec::Constant(n, 2.0), project_box(w, Vec::Constant(n, -2.0), Vec::Constant(n, 2.0)));
    q.req.warm_start[2] = q.req.warm_start[0] + q.req.warm_start[1];
    if (std::abs(q.req.warm_start[2]) > 2.0) q.req.warm_start.setZero();
    const double f0 = q.req.value(q.req.warm_start);
    for (SolverKind k : {SolverKind::BoxPG, SolverKind::QuadraticExact}) {
      const auto r = dispatch(q.req, k);
      if (r.status == SolveStatus::NumericalFailure) continue;
      CHECK(q.req.value(r.x) <= f0 + 1e-12 * (1.0 + std::abs(f0)));
      const auto again = dispatch(q.req, k);
      CHECK(again.x == r.x);
    }
    q.set.equalities.push_back(SmoothFunction::affine(a, 0.0));
    const auto r = dispatch(q.req);
    CHECK(q.req.value(r.x) <= f0 + 1e-12 * (1.0 + std::abs(f0)));
    CHECK(dispatch(q.req).x == r.x);
    if (r.status == SolveStatus::Converged) {
      CHECK(r.eq_violation <= 1e-9);
      CHECK(r.pg_norm <= 1e-9);
    }
  }
}
