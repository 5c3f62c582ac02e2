#include <random>

#include "doctest.h"
#include "proxjac/algebra.hpp"
#include "proxjac/problems.hpp"

using namespace proxjac;

namespace {

Problem scalar_pair() {
  Problem p;
  p.m = 1;
  p.b = Vec::Ones(1);
  for (int t = 0; t < 2; ++t) {
    BlockSpec blk;
    blk.n = 1;
    blk.objective = SmoothFunction::quadratic(sparse_from_triplets(1, 1, {{0, 0, 1.0}}), Vec::Zero(1), 0.0);
    blk.set.lower = Vec::Constant(1, -1e300);
    blk.set.upper = Vec::Constant(1, 1e300);
    blk.A = sparse_from_triplets(1, 1, {{0, 0, 1.0}});
    p.blocks.push_back(blk);
  }
  return p;
}

BlockVecs random_x(const Problem& p, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  BlockVecs x;
  for (const auto& blk : p.blocks) {
    Vec v(blk.n);
    for (int i = 0; i < blk.n; ++i) v[i] = N(rng);
    x.push_back(v);
  }
  return x;
}

Vec stacked(const BlockVecs& x) {
  int n = 0;
  for (const auto& v : x) n += static_cast<int>(v.size());
  Vec out(n);
  int o = 0;
  for (const auto& v : x) {
    out.segment(o, v.size()) = v;
    o += static_cast<int>(v.size());
  }
  return out;
}

}  // namespace

TEST_CASE("couple_apply on scalars") {
  const Problem p = scalar_pair();
  CHECK(couple_apply(p, {Vec::Constant(1, 2.0), Vec::Constant(1, 3.0)})[0] == 5.0);
  CHECK(couple_apply(p, {Vec::Zero(1), Vec::Zero(1)})[0] == 0.0);
  CHECK(couple_apply_except(p, {Vec::Constant(1, 2.0), Vec::Constant(1, 3.0)}, 0)[0] == 3.0);
}

TEST_CASE("couple_apply_except with a single block is zero") {
  Problem p = scalar_pair();
  p.blocks.pop_back();
  CHECK(couple_apply_except(p, {Vec::Constant(1, 7.0)}, 0).norm() == 0.0);
}

TEST_CASE("couple_apply agrees with the dense stacked product") {
  std::mt19937_64 rng(4);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Problem p = gen_coupled_qp(seed, 3, 3, 3).first;
    const BlockVecs x = random_x(p, rng);
    const Vec dense = stacked_coupling(p) * stacked(x);
    CHECK((couple_apply(p, x) - dense).cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, dense.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("couple_apply_except equals the total minus one block") {
  std::mt19937_64 rng(5);
  const Problem p = gen_coupled_qp(9, 4, 2, 3).first;
  const BlockVecs x = random_x(p, rng);
  for (int t = 0; t < 4; ++t) {
    const Vec ref = couple_apply(p, x) - p.blocks[t].A * x[t];
    CHECK((couple_apply_except(p, x, t) - ref).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("couple_apply is linear") {
  std::mt19937_64 rng(6);
  const Problem p = gen_coupled_qp(2, 3, 4, 2).first;
  const BlockVecs x = random_x(p, rng), y = random_x(p, rng);
  BlockVecs sum, scaled;
  for (int t = 0; t < p.T(); ++t) {
    sum.push_back(x[t] + y[t]);
    scaled.push_back(-2.5 * x[t]);
  }
  CHECK((couple_apply(p, sum) - couple_apply(p, x) - couple_apply(p, y)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((couple_apply(p, scaled) + 2.5 * couple_apply(p, x)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("seminorm_sq") {
  Vec v(3);
  v << 1.0, -2.0, 0.5;
  const SpMat I = sparse_from_triplets(3, 3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}});
  CHECK(seminorm_sq(I, v) == doctest::Approx(v.squaredNorm()));
  const SpMat row = sparse_from_triplets(1, 2, {{0, 0, 1.0}, {0, 1, 1.0}});
  Vec w(2);
  w << 1.0, 2.0;
  CHECK(seminorm_sq(row, w) == 9.0);
  w << 1.0, -1.0;
  CHECK(seminorm_sq(row, w) == 0.0);
}

TEST_CASE("spectral_norm on known spectra and against SVD") {
  CHECK(spectral_norm(sparse_from_triplets(3, 3, {{0, 0, 2.0}, {1, 1, 2.0}, {2, 2, 2.0}})) ==
        doctest::Approx(2.0).epsilon(1e-12));
  CHECK(spectral_norm(sparse_from_triplets(2, 2, {{0, 0, 3.0}, {1, 1, 4.0}})) == doctest::Approx(4.0).epsilon(1e-10));
  CHECK(spectral_norm(SpMat(3, 4)) == 0.0);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 8; ++j) trips.emplace_back(i, j, N(rng));
    }
    const SpMat A = sparse_from_triplets(5, 8, trips);
    const double ref = Eigen::JacobiSVD<DenseMat>(DenseMat(A)).singularValues()[0];
    const double est = spectral_norm(A);
    CHECK(std::abs(est - ref) <= 1e-8 * ref);
  }
}

TEST_CASE("R-matrix extremes follow the closed form") {
  CHECK(r_matrix_eigencheck(1.0, 0.0, 1, 3).min == doctest::Approx(0.0));
  CHECK(r_matrix_eigencheck(1.0, 0.0, 1, 3).max == doctest::Approx(0.0));
  const auto a = r_matrix_eigencheck(1.0, 3.0, 2, 1);
  CHECK(a.min == doctest::Approx(2.0));
  CHECK(a.max == doctest::Approx(4.0));
  const auto b = r_matrix_eigencheck(2.0, 10.0, 4, 3);
  CHECK(b.min == doctest::Approx(4.0));
  CHECK(b.max == doctest::Approx(12.0));
  CHECK_THROWS_AS(r_matrix_eigencheck(1.0, 1.0, 100, 21), std::length_error);
}

TEST_CASE("apply_r equals the dense R product") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N(0.0, 1.0);
  const int T = 3, m = 2;
  const double rho = 1.7, tau = 0.4;
  DenseMat E = DenseMat::Zero(T * m, m);
  for (int t = 0; t < T; ++t) E.block(t * m, 0, m, m).setIdentity();
  const DenseMat R = (rho + tau) * DenseMat::Identity(T * m, T * m) - rho * E * E.transpose();
  Vec v(T * m);
  for (int i = 0; i < T * m; ++i) v[i] = N(rng);
  CHECK((apply_r(v, rho, tau, T, m) - R * v).norm() <= 1e-13);
}

TEST_CASE("workspace caches match direct computations") {
  const Problem p = gen_coupled_qp(4, 3, 3, 2).first;
  const CouplingWorkspace ws = CouplingWorkspace::build(p);
  REQUIRE(ws.spectral_norms.size() == 3);
  for (int t = 0; t < 3; ++t) {
    const DenseMat A(p.blocks[t].A);
    CHECK((ws.gram[t] - A.transpose() * A).norm() <= 1e-13);
    CHECK(ws.column_norms[t][0] == doctest::Approx(A.col(0).norm()));
    CHECK(ws.spectral_norms[t] == doctest::Approx(spectral_norm(p.blocks[t].A)));
  }
}
