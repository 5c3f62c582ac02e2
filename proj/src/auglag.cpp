#include "proxjac/auglag.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "proxjac/algebra.hpp"

namespace proxjac {

namespace {

void check_vec(const Vec& v, int n, const char* who, const char* what) {
  if (v.size() != n) {
    throw DimensionError(std::string(who) + ": " + what + " has length " + std::to_string(v.size()) +
                         ", expected " + std::to_string(n));
  }
}

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

}  // namespace

double aug_lagrangian(const Problem& p, const BlockVecs& x, const Vec& z, const Vec& lambda,
                      const Params& params) {
  check_vec(z, p.m, "aug_lagrangian", "z");
  check_vec(lambda, p.m, "aug_lagrangian", "lambda");
  const Vec r = couple_apply(p, x) + z - p.b;
  double f = 0.0;
  for (int t = 0; t < p.T(); ++t) f += p.blocks[t].objective.value(x[t]);
  return f + 0.5 * params.theta * z.squaredNorm() + lambda.dot(r) + 0.5 * params.rho * r.squaredNorm();
}

BlockObjective::BlockObjective(const Problem& p, int t, const BlockVecs& x_bar, const Vec& z_bar,
                               const Vec& lambda_bar, const Params& params, const Vec& anchor)
    : blk_(&p.blocks.at(t)),
      t_(t),
      lambda_(lambda_bar),
      offset_(couple_apply_except(p, x_bar, t) + z_bar - p.b),
      anchor_(anchor),
      rho_(params.rho),
      tau_x_(params.tau_x) {
  check_vec(z_bar, p.m, "BlockObjective", "z");
  check_vec(lambda_bar, p.m, "BlockObjective", "lambda");
  check_vec(anchor, blk_->n, "BlockObjective", "anchor");
}

double BlockObjective::value(const Vec& x) const {
  check_vec(x, blk_->n, "BlockObjective::value", "x");
  const Vec Ax = blk_->A * x;
  const Vec Ad = blk_->A * (x - anchor_);
  return blk_->objective.value(x) + lambda_.dot(Ax) + 0.5 * rho_ * (Ax + offset_).squaredNorm() +
         0.5 * tau_x_ * Ad.squaredNorm();
}

Vec BlockObjective::gradient(const Vec& x) const {
  check_vec(x, blk_->n, "BlockObjective::gradient", "x");
  const Vec Ax = blk_->A * x;
  const Vec Ad = blk_->A * (x - anchor_);
  Vec w = lambda_ + rho_ * (Ax + offset_) + tau_x_ * Ad;
  return blk_->objective.gradient(x) + blk_->A.transpose() * w;
}

std::optional<BlockObjective::QuadraticForm> BlockObjective::quadratic_form() const {
  if (!blk_->objective.is_quadratic()) return std::nullopt;
  const auto& q = blk_->objective.as_quadratic();
  const DenseMat A(blk_->A);
  QuadraticForm qf;
  qf.H = DenseMat(q.Q) + (rho_ + tau_x_) * (A.transpose() * A);
  qf.h = q.c + A.transpose() * (lambda_ + rho_ * offset_ - tau_x_ * (A * anchor_));
  return qf;
}

double block_objective(const Problem& p, int t, const Vec& x_t, const BlockVecs& x_bar, const Vec& z_bar,
                       const Vec& lambda_bar, const Params& params, const Vec& x_anchor) {
  return BlockObjective(p, t, x_bar, z_bar, lambda_bar, params, x_anchor).value(x_t);
}

double lyapunov(const Problem& p, const BlockVecs& x, const Vec& z, const Vec& lambda, const BlockVecs& x_hat,
                const Vec& z_hat, const Params& params) {
  check_vec(z_hat, p.m, "lyapunov", "z_hat");
  double phi = aug_lagrangian(p, x, z, lambda, params);
  phi += 0.25 * params.tau_z * (z - z_hat).squaredNorm();
  if (static_cast<int>(x_hat.size()) != p.T()) throw DimensionError("lyapunov: x_hat block count");
  double prox = 0.0;
  for (int t = 0; t < p.T(); ++t) {
    check_vec(x_hat[t], p.blocks[t].n, "lyapunov", "x_hat block");
    prox += seminorm_sq(p.blocks[t].A, x[t] - x_hat[t]);
  }
  return phi + 0.25 * params.tau_x * prox;
}

double lyapunov_initial(const Problem& p, const BlockVecs& x0, const Vec& z0, const Vec& lambda0,
                        const Params& params) {
  const double L = aug_lagrangian(p, x0, z0, lambda0, params);
  if (params.tau_z == 0.0) return L;
  const Vec dz0 = -(lambda0 + params.theta * z0) / params.tau_z;
  return L + 0.25 * params.tau_z * dz0.squaredNorm();
}

double primal_residual(const Problem& p, const BlockVecs& x) { return (couple_apply(p, x) - p.b).norm(); }

double dual_residual(const Problem& p, int t, const Vec& x_t, const Vec& lambda) {
  const auto& blk = p.blocks.at(t);
  check_vec(x_t, blk.n, "dual_residual", "x_t");
  check_vec(lambda, p.m, "dual_residual", "lambda");
  const Vec& lo = blk.set.lower;
  const Vec& hi = blk.set.upper;
  for (int i = 0; i < blk.n; ++i) {
    if (x_t[i] < lo[i] - kSetTolerance || x_t[i] > hi[i] + kSetTolerance) {
      throw ResidualUndefined("residual undefined off the set: bound violated at coordinate " +
                              std::to_string(i));
    }
  }
  for (const auto& c : blk.set.equalities) {
    if (std::abs(c.value(x_t)) > kSetTolerance) {
      throw ResidualUndefined("residual undefined off the set: equality violated");
    }
  }

  const Vec g = blk.objective.gradient(x_t) + blk.A.transpose() * lambda;
  std::vector<char> at_lo(blk.n), at_hi(blk.n);
  std::vector<int> free_idx;
  for (int i = 0; i < blk.n; ++i) {
    at_lo[i] = std::isfinite(lo[i]) && x_t[i] - lo[i] <= kSetTolerance;
    at_hi[i] = std::isfinite(hi[i]) && hi[i] - x_t[i] <= kSetTolerance;
    if (!at_lo[i] && !at_hi[i]) free_idx.push_back(i);
  }

  Vec r = g;
  const int neq = static_cast<int>(blk.set.equalities.size());
  if (neq > 0 && !free_idx.empty()) {
    DenseMat J(neq, blk.n);
    for (int e = 0; e < neq; ++e) J.row(e) = blk.set.equalities[e].gradient(x_t).transpose();
    const int nf = static_cast<int>(free_idx.size());
    DenseMat JF(nf, neq);
    Vec gF(nf);
    for (int k = 0; k < nf; ++k) {
      JF.row(k) = J.col(free_idx[k]).transpose();
      gF[k] = g[free_idx[k]];
    }
    const Vec mu = JF.colPivHouseholderQr().solve(-gF);
    r = g + J.transpose() * mu;
  }

  double acc = 0.0;
  for (int i = 0; i < blk.n; ++i) {
    double c = 0.0;
    if (at_lo[i] && at_hi[i]) {
      c = 0.0;
    } else if (at_lo[i]) {
      c = std::max(0.0, -r[i]);
    } else if (at_hi[i]) {
      c = std::max(0.0, r[i]);
    } else {
      c = std::abs(r[i]);
    }
    acc += c * c;
  }
  return std::sqrt(acc);
}

ResidualSnapshot penalty_residuals(const Problem& p, const IterateState& state, const Params& params) {
  if (state.k < 1) throw std::logic_error("penalty_residuals: undefined at k = 0");
  ResidualSnapshot s;
  const Vec Ax = couple_apply(p, state.x);
  s.p = Ax + state.z - p.b;
  s.pi = (Ax - p.b).norm();
  s.infnorm_coupling = inf_norm(Ax - p.b);
  s.infnorm_p = inf_norm(s.p);

  BlockVecs dx(p.T());
  for (int t = 0; t < p.T(); ++t) dx[t] = state.x[t] - state.x_prev[t];
  double dinf = 0.0;
  for (int t = 0; t < p.T(); ++t) {
    const auto& A = p.blocks[t].A;
    const Vec others = couple_apply_except(p, dx, t);
    Vec d = params.rho * (A.transpose() * others) - params.rho * (A.transpose() * state.dz) -
            params.tau_x * (A.transpose() * (A * dx[t]));
    dinf = std::max(dinf, inf_norm(d));
    s.d_blocks.push_back(std::move(d));
  }
  s.d_z = -params.tau_z * state.dz;
  s.infnorm_d = std::max(dinf, inf_norm(s.d_z));

  s.delta.resize(p.T());
  for (int t = 0; t < p.T(); ++t) {
    try {
      s.delta[t] = dual_residual(p, t, state.x[t], state.lambda);
    } catch (const ResidualUndefined&) {
      s.delta[t] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return s;
}

EtaPair eta_pair(const Params& params, int T) {
  EtaPair e;
  e.eta_x = params.tau_x / 4.0 - (T - 1) * params.rho / 2.0;
  const double s = params.theta + params.tau_z;
  e.eta_z = params.tau_z / 4.0 - 2.0 * s * s / params.rho;
  e.feasible = e.eta_x > 0.0 && e.eta_z > 0.0;
  return e;
}

Params convergence_params(double eps, int T) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("convergence_params: eps must lie in (0, 1)");
  if (T < 1) throw std::invalid_argument("convergence_params: T must be >= 1");
  const double inv = 1.0 / (eps * eps);
  return Params{64.0 * inv, inv, 256.0 * (T - 1) * inv, 2.0 * inv};
}

ConvergenceBounds convergence_bounds(double phi1, double phi_hat, double phiK, int K, const Params& params,
                               const std::vector<double>& specnorms, int T) {
  const EtaPair eta = eta_pair(params, T);
  if (!eta.feasible) throw std::domain_error("bounds undefined: eta_x and eta_z must be positive");
  if (K < 1) throw std::invalid_argument("convergence_bounds: K must be >= 1");
  if (static_cast<int>(specnorms.size()) != T) throw DimensionError("convergence_bounds: specnorms length != T");
  const double s = params.theta + params.tau_z;
  ConvergenceBounds b;
  const double gap_hat = std::max(0.0, phi1 - phi_hat);
  b.pi_bound = std::sqrt(2.0 * gap_hat / params.theta * (1.0 + 2.0 * s * s / (K * eta.eta_z * params.rho)));
  const double gap_K = std::max(0.0, phi1 - phiK);
  const double root = std::sqrt(2.0 * (T + 1) * gap_K / (K * std::min(eta.eta_x, eta.eta_z)));
  for (int t = 0; t < T; ++t) b.delta_bounds.push_back((params.rho + params.tau_x) * specnorms[t] * root);
  return b;
}

double dagger_norm_sq(const Problem& p, const IterateState& state, const BlockVecs& ref_x, const Vec& ref_z,
                      const Vec& ref_lambda, const Params& params) {
  if (static_cast<long>(p.T()) * p.m > kDenseStackCap) {
    throw std::length_error("dagger_norm_sq: T*m exceeds size cap");
  }
  check_vec(ref_z, p.m, "dagger_norm_sq", "ref_z");
  check_vec(ref_lambda, p.m, "dagger_norm_sq", "ref_lambda");
  BlockVecs dev(p.T());
  if (static_cast<int>(ref_x.size()) != p.T()) throw DimensionError("dagger_norm_sq: ref_x block count");
  for (int t = 0; t < p.T(); ++t) dev[t] = state.x[t] - ref_x[t];
  const Vec Ddev = stack_dx(p, dev);
  const double xr = Ddev.dot(apply_r(Ddev, params.rho, params.tau_x, p.T(), p.m));
  return xr + (params.rho + params.tau_z) * (state.z - ref_z).squaredNorm() +
         (state.lambda - ref_lambda).squaredNorm() / params.rho + params.tau_z * state.dz.squaredNorm();
}

}  // namespace proxjac
