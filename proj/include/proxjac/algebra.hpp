#pragma once

#include <utility>
#include <vector>

#include "proxjac/model.hpp"

namespace proxjac {

/// Largest T*m for which the dense R = (rho + tau_x) I - rho E E^T is formed.
inline constexpr int kDenseStackCap = 2000;

/// sum_t A_t x_t, accumulated in block order.
Vec couple_apply(const Problem& p, const BlockVecs& x);

/// sum_{s != t} A_s x_s, accumulated in block order skipping t (no subtraction).
Vec couple_apply_except(const Problem& p, const BlockVecs& x, int t);

/// ||A v||^2 = v^T A^T A v.
double seminorm_sq(const SpMat& A, const Vec& v);

/// Top singular value by power iteration on A^T A (200 iterations or relative
/// change below 1e-12). Returns 0 for a zero matrix.
double spectral_norm(const SpMat& A);

struct Eigenrange {
  double min;
  double max;
};

/// Extreme eigenvalues of R = (rho + tau_x) I - rho E E^T, with E^T = [I ... I]
/// (T copies of I_m), computed from the explicitly formed dense matrix.
/// Throws std::length_error when T*m exceeds kDenseStackCap.
Eigenrange r_matrix_eigencheck(double rho, double tau_x, int T, int m);

/// R applied to a stacked Tm-vector through its closed action
/// (rho + tau_x) v - rho E (E^T v).
Vec apply_r(const Vec& stacked, double rho, double tau_x, int T, int m);

/// Dx = (A_1 x_1, ..., A_T x_T) as one Tm-vector.
Vec stack_dx(const Problem& p, const BlockVecs& x);

/// Per-problem caches reused across iterations.
struct CouplingWorkspace {
  std::vector<double> spectral_norms;            // ||A_t||
  std::vector<std::vector<double>> column_norms;  // ||A_t e_j||
  std::vector<DenseMat> gram;                     // A_t^T A_t

  static CouplingWorkspace build(const Problem& p);
};

}  // namespace proxjac
