#include "proxjac/algebra.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

namespace proxjac {

namespace {

void check_blocks(const Problem& p, const BlockVecs& x, const char* who) {
  if (static_cast<int>(x.size()) != p.T()) {
    throw DimensionError(std::string(who) + ": expected " + std::to_string(p.T()) + " block vectors, got " +
                         std::to_string(x.size()));
  }
  for (int t = 0; t < p.T(); ++t) {
    if (x[t].size() != p.blocks[t].n) {
      throw DimensionError(std::string(who) + ": block " + std::to_string(t) + " has dimension " +
                           std::to_string(x[t].size()) + ", expected " + std::to_string(p.blocks[t].n));
    }
  }
}

}  // namespace

Vec couple_apply(const Problem& p, const BlockVecs& x) {
  check_blocks(p, x, "couple_apply");
  Vec out = Vec::Zero(p.m);
  for (int t = 0; t < p.T(); ++t) out += p.blocks[t].A * x[t];
  return out;
}

Vec couple_apply_except(const Problem& p, const BlockVecs& x, int t) {
  if (t < 0 || t >= p.T()) throw std::out_of_range("couple_apply_except: block index out of range");
  check_blocks(p, x, "couple_apply_except");
  Vec out = Vec::Zero(p.m);
  for (int s = 0; s < p.T(); ++s) {
    if (s != t) out += p.blocks[s].A * x[s];
  }
  return out;
}

double seminorm_sq(const SpMat& A, const Vec& v) {
  if (A.cols() != v.size()) throw DimensionError("seminorm_sq: dimension mismatch");
  return (A * v).squaredNorm();
}

double spectral_norm(const SpMat& A) {
  if (A.nonZeros() == 0 || A.cols() == 0) return 0.0;
  const int n = static_cast<int>(A.cols());
  // Deterministic start with no special alignment to any singular vector.
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = 1.0 + 0.1 * std::sin(1.0 + i);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    Vec w = A.transpose() * (A * v);
    const double next = v.dot(w);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
    const bool done = it > 0 && std::abs(next - lambda) <= 1e-12 * std::abs(next);
    lambda = next;
    if (done) break;
  }
  // Rayleigh quotient of the final vector.
  lambda = (A * v).squaredNorm();
  return std::sqrt(lambda);
}

Eigenrange r_matrix_eigencheck(double rho, double tau_x, int T, int m) {
  if (T < 1 || m < 1) throw std::invalid_argument("r_matrix_eigencheck: T and m must be >= 1");
  const int N = T * m;
  if (N > kDenseStackCap) throw std::length_error("r_matrix_eigencheck: T*m exceeds size cap");
  // E E^T = (e e^T) kron I_m: identity blocks in every (s, t) position.
  DenseMat EEt = DenseMat::Zero(N, N);
  for (int s = 0; s < T; ++s) {
    for (int t = 0; t < T; ++t) EEt.block(s * m, t * m, m, m).setIdentity();
  }
  DenseMat R = (rho + tau_x) * DenseMat::Identity(N, N) - rho * EEt;
  Eigen::SelfAdjointEigenSolver<DenseMat> es(R, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

Vec apply_r(const Vec& stacked, double rho, double tau_x, int T, int m) {
  if (stacked.size() != static_cast<Eigen::Index>(T) * m) throw DimensionError("apply_r: dimension mismatch");
  Vec sum = Vec::Zero(m);
  for (int t = 0; t < T; ++t) sum += stacked.segment(t * m, m);
  Vec out = (rho + tau_x) * stacked;
  for (int t = 0; t < T; ++t) out.segment(t * m, m) -= rho * sum;
  return out;
}

Vec stack_dx(const Problem& p, const BlockVecs& x) {
  check_blocks(p, x, "stack_dx");
  Vec out(static_cast<Eigen::Index>(p.T()) * p.m);
  for (int t = 0; t < p.T(); ++t) out.segment(t * p.m, p.m) = p.blocks[t].A * x[t];
  return out;
}

CouplingWorkspace CouplingWorkspace::build(const Problem& p) {
  CouplingWorkspace ws;
  for (const auto& blk : p.blocks) {
    ws.spectral_norms.push_back(spectral_norm(blk.A));
    const DenseMat A(blk.A);
    std::vector<double> cn(blk.n);
    for (int j = 0; j < blk.n; ++j) cn[j] = A.col(j).norm();
    ws.column_norms.push_back(std::move(cn));
    ws.gram.push_back(A.transpose() * A);
  }
  return ws;
}

}  // namespace proxjac
