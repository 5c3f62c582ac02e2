#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "proxjac/model.hpp"

namespace proxjac {

/// Thrown by dual_residual when x_t is not in X_t to within kSetTolerance.
class ResidualUndefined : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Feasibility tolerance for evaluating residuals on X_t.
inline constexpr double kSetTolerance = 1e-8;

/// L(x, z, lambda) = sum f_t(x_t) + theta/2 |z|^2 + lambda^T r + rho/2 |r|^2,
/// r = Ax + z - b.
double aug_lagrangian(const Problem& p, const BlockVecs& x, const Vec& z, const Vec& lambda,
                      const Params& params);

/// The x_t-subproblem
///
///   f_t(x_t) + lam^T A_t x_t + rho/2 |A_t x_t + A_{!=t} xbar_{!=t} + zbar - b|^2
///            + tau_x/2 |A_t (x_t - anchor)|^2
///
/// with every other block, z and lambda frozen.
class BlockObjective {
 public:
  BlockObjective(const Problem& p, int t, const BlockVecs& x_bar, const Vec& z_bar, const Vec& lambda_bar,
                 const Params& params, const Vec& anchor);

  int block() const { return t_; }
  int dim() const { return blk_->n; }
  const BlockSpec& spec() const { return *blk_; }
  const Vec& anchor() const { return anchor_; }

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;

  /// Returns (H, h) with objective = 1/2 x^T H x + h^T x + const when f_t is
  /// quadratic; nullopt otherwise.
  struct QuadraticForm {
    DenseMat H;
    Vec h;
  };
  std::optional<QuadraticForm> quadratic_form() const;

 private:
  const BlockSpec* blk_;
  int t_;
  Vec lambda_;
  Vec offset_;  // A_{!=t} xbar_{!=t} + zbar - b
  Vec anchor_;
  double rho_;
  double tau_x_;
};

/// Value of the block objective (see BlockObjective).
double block_objective(const Problem& p, int t, const Vec& x_t, const BlockVecs& x_bar, const Vec& z_bar,
                       const Vec& lambda_bar, const Params& params, const Vec& x_anchor);

/// Phi(x, z, lambda, xhat, zhat) = L + tau_z/4 |z - zhat|^2 + sum tau_x/4 |x_t - xhat_t|^2_{A_t^T A_t}.
double lyapunov(const Problem& p, const BlockVecs& x, const Vec& z, const Vec& lambda, const BlockVecs& x_hat,
                const Vec& z_hat, const Params& params);

/// Phi^0 = L(x0, z0, lambda0) + tau_z/4 |dz0|^2 with dz0 = -(lambda0 + theta z0)/tau_z.
double lyapunov_initial(const Problem& p, const BlockVecs& x0, const Vec& z0, const Vec& lambda0,
                        const Params& params);

/// pi(x) = |Ax - b|_2.
double primal_residual(const Problem& p, const BlockVecs& x);

/// delta_t(x_t, lambda) = dist(grad f_t(x_t) + A_t^T lambda, -N_{X_t}(x_t)).
/// Box coordinates use the exact normal-cone rule; equality multipliers are
/// fitted by least squares on the box-inactive coordinates first.
double dual_residual(const Problem& p, int t, const Vec& x_t, const Vec& lambda);

struct ResidualSnapshot {
  double pi = 0.0;
  std::vector<double> delta;  // NaN where the block iterate is off its set
  Vec p;
  BlockVecs d_blocks;
  Vec d_z;
  double infnorm_p = 0.0;
  double infnorm_d = 0.0;
  double infnorm_coupling = 0.0;
};

/// Primal/dual residuals of the penalty formulation at iterate k >= 1:
///   p   = A x^k + z^k - b
///   d_t = rho A_t^T A_{!=t} dx_{!=t} - rho A_t^T dz - tau_x A_t^T A_t dx_t
///   d_z = -tau_z dz
/// plus pi, delta_t and infinity norms. Throws std::logic_error at k = 0.
ResidualSnapshot penalty_residuals(const Problem& p, const IterateState& state, const Params& params);

struct EtaPair {
  double eta_x;
  double eta_z;
  bool feasible;
};

/// eta_x = tau_x/4 - (T-1) rho/2,  eta_z = tau_z/4 - 2 (theta + tau_z)^2 / rho.
EtaPair eta_pair(const Params& params, int T);

/// theta = 1/eps^2, rho = 64/eps^2, tau_x = 256 (T-1)/eps^2, tau_z = 2/eps^2.
Params convergence_params(double eps, int T);

struct ConvergenceBounds {
  double pi_bound;
  std::vector<double> delta_bounds;
};

/// Bounds guaranteed for some j in [K] by the global convergence theorem.
/// Throws std::domain_error when eta is infeasible.
ConvergenceBounds convergence_bounds(double phi1, double phi_hat, double phiK, int K, const Params& params,
                               const std::vector<double>& specnorms, int T);

/// Squared dagger-norm of (Dx - Dx*, z - z*, lambda - lambda*, dz):
///   |D(x - x*)|_R^2 + (rho + tau_z)|z - z*|^2 + |lambda - lambda*|^2 / rho + tau_z |dz|^2.
double dagger_norm_sq(const Problem& p, const IterateState& state, const BlockVecs& ref_x, const Vec& ref_z,
                      const Vec& ref_lambda, const Params& params);

}  // namespace proxjac
