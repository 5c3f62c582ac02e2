#pragma once

#include <vector>

#include "proxjac/model.hpp"

namespace proxjac {

/// One entry Y_ij = re + i*im of row i of the bus admittance matrix.
struct AdmittanceEntry {
  int j = 0;
  double re = 0.0;
  double im = 0.0;
};

/// c_i^re, c_i^im and their partial derivatives with respect to every V_j
/// and theta_j (dense over buses).
struct BalanceTerms {
  double c_re = 0.0;
  double c_im = 0.0;
  Vec dre_dV, dre_dth;
  Vec dim_dV, dim_dth;
};

/// Polar injections at bus i. `row` holds row i of Y; the diagonal entry
/// contributes the V_i^2 terms, off-diagonal entries the neighbor sums.
BalanceTerms polar_balance(int i, const Vec& V, const Vec& theta, const std::vector<AdmittanceEntry>& row);

}  // namespace proxjac
