#include "proxjac/subsolver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

namespace proxjac {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kStepMin = 1e-8;
constexpr double kStepMax = 1e8;
constexpr int kMaxHalvings = 60;

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

bool finite(double v) { return std::isfinite(v); }

const ConstraintSet& set_of(const BlockSolveRequest& req) {
  if (req.set == nullptr) throw std::invalid_argument("BlockSolveRequest: constraint set missing");
  return *req.set;
}

Vec equality_values(const ConstraintSet& set, const Vec& x) {
  Vec c(static_cast<Eigen::Index>(set.equalities.size()));
  for (std::size_t i = 0; i < set.equalities.size(); ++i) c[static_cast<Eigen::Index>(i)] = set.equalities[i].value(x);
  return c;
}

DenseMat equality_jacobian(const ConstraintSet& set, const Vec& x) {
  DenseMat J(static_cast<Eigen::Index>(set.equalities.size()), x.size());
  for (std::size_t i = 0; i < set.equalities.size(); ++i) {
    J.row(static_cast<Eigen::Index>(i)) = set.equalities[i].gradient(x).transpose();
  }
  return J;
}

/// Warm start clipped into the box.
Vec clipped_start(const BlockSolveRequest& req) {
  const auto& set = set_of(req);
  if (req.warm_start.size() != set.lower.size()) throw DimensionError("BlockSolveRequest: warm start dimension");
  return project_box(req.warm_start, set.lower, set.upper);
}

}  // namespace

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged:
      return "converged";
    case SolveStatus::IterationCap:
      return "iteration-cap";
    case SolveStatus::NumericalFailure:
      return "numerical-failure";
  }
  return "unknown";
}

const char* to_string(SolverKind k) {
  switch (k) {
    case SolverKind::Auto:
      return "auto";
    case SolverKind::QuadraticExact:
      return "quadratic-exact";
    case SolverKind::BoxPG:
      return "box-pg";
    case SolverKind::EqualityALM:
      return "equality-alm";
  }
  return "unknown";
}

BlockSolveRequest make_request(const BlockObjective& obj, const Vec& warm_start, const SolverOptions& opts) {
  BlockSolveRequest req;
  req.t = obj.block();
  req.value = [&obj](const Vec& x) { return obj.value(x); };
  req.gradient = [&obj](const Vec& x) { return obj.gradient(x); };
  req.quadratic = obj.quadratic_form();
  req.set = &obj.spec().set;
  req.warm_start = warm_start;
  req.options = opts;
  return req;
}

Vec project_box(const Vec& x, const Vec& lower, const Vec& upper) {
  if (x.size() != lower.size() || x.size() != upper.size()) throw DimensionError("project_box: dimension mismatch");
  return x.cwiseMax(lower).cwiseMin(upper);
}

double projected_gradient_norm(const Vec& x, const Vec& g, const Vec& lower, const Vec& upper) {
  return inf_norm(x - project_box(x - g, lower, upper));
}

BlockSolveResult solve_quadratic_exact(const BlockSolveRequest& req) {
  BlockSolveResult res;
  res.solver = SolverKind::QuadraticExact;
  res.x = req.warm_start;
  if (!req.quadratic) {
    res.status = SolveStatus::NumericalFailure;
    return res;
  }
  const auto& qf = *req.quadratic;
  Eigen::LLT<DenseMat> llt(qf.H);
  if (llt.info() != Eigen::Success) {
    res.status = SolveStatus::NumericalFailure;
    return res;
  }
  Vec x = llt.solve(-qf.h);
  const Vec grad = qf.H * x + qf.h;
  res.inner_iterations = 1;
  res.pg_norm = inf_norm(grad);
  if (!x.allFinite() || grad.norm() > 1e-10 * (1.0 + qf.h.norm())) {
    res.status = SolveStatus::NumericalFailure;
    return res;
  }
  res.x = std::move(x);
  res.status = SolveStatus::Converged;
  return res;
}

BlockSolveResult solve_box_pg(const BlockSolveRequest& req) {
  const auto& set = set_of(req);
  const double tol = req.options.tol;
  BlockSolveResult res;
  res.solver = SolverKind::BoxPG;

  Vec x = clipped_start(req);
  double f = req.value(x);
  Vec g = req.gradient(x);
  res.x = x;
  if (!finite(f) || !g.allFinite()) {
    res.status = SolveStatus::NumericalFailure;
    return res;
  }
  double pg = projected_gradient_norm(x, g, set.lower, set.upper);
  const double gmax = inf_norm(g);
  double alpha = std::clamp(gmax > 0.0 ? 1.0 / gmax : 1.0, kStepMin, kStepMax);

  int it = 0;
  bool stalled = false;
  while (pg > tol && it < req.options.max_iters) {
    ++it;
    double step = alpha;
    Vec xn;
    double fn = 0.0;
    bool accepted = false;
    for (int h = 0; h < kMaxHalvings; ++h) {
      xn = project_box(x - step * g, set.lower, set.upper);
      const double dec = g.dot(xn - x);
      fn = req.value(xn);
      if (!finite(fn)) {
        step *= 0.5;
        continue;
      }
      if (fn <= f + kArmijo * dec && fn <= f) {
        accepted = true;
        break;
      }
      // Within rounding of f: accept when the projected gradient shrinks.
      if (fn - f <= 1e-14 * (1.0 + std::abs(f)) &&
          projected_gradient_norm(xn, req.gradient(xn), set.lower, set.upper) < pg) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      stalled = true;
      break;
    }
    Vec gn = req.gradient(xn);
    if (!gn.allFinite()) {
      res.x = x;
      res.status = SolveStatus::NumericalFailure;
      res.inner_iterations = it;
      return res;
    }
    const Vec s = xn - x;
    const Vec y = gn - g;
    const double sy = s.dot(y);
    alpha = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, kStepMin, kStepMax) : kStepMax;
    const bool moved = s.squaredNorm() > 0.0;
    x = std::move(xn);
    f = fn;
    g = std::move(gn);
    pg = projected_gradient_norm(x, g, set.lower, set.upper);
    if (!moved) {
      stalled = true;
      break;
    }
  }
  (void)stalled;
  res.x = std::move(x);
  res.pg_norm = pg;
  res.inner_iterations = it;
  res.status = pg <= tol ? SolveStatus::Converged : SolveStatus::IterationCap;
  return res;
}

namespace {

/// Symmetrized central-difference Hessian of req.gradient.
DenseMat fd_hessian(const BlockSolveRequest& req, const Vec& x) {
  const Eigen::Index n = x.size();
  DenseMat H(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    H.col(i) = (req.gradient(xp) - req.gradient(xm)) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace

BlockSolveResult solve_box_newton(const BlockSolveRequest& req) {
  const auto& set = set_of(req);
  const double tol = req.options.tol;
  const Eigen::Index n = set.lower.size();
  BlockSolveResult res;
  res.solver = SolverKind::BoxPG;

  Vec x = clipped_start(req);
  double f = req.value(x);
  Vec g = req.gradient(x);
  res.x = x;
  if (!finite(f) || !g.allFinite()) {
    res.status = SolveStatus::NumericalFailure;
    return res;
  }
  double pg = projected_gradient_norm(x, g, set.lower, set.upper);
  int it = 0;
  while (pg > tol && it < req.options.max_iters) {
    ++it;
    const DenseMat H = req.quadratic ? req.quadratic->H : fd_hessian(req, x);
    if (!H.allFinite()) {
      res.x = x;
      res.status = SolveStatus::NumericalFailure;
      res.inner_iterations = it;
      return res;
    }
    // Coordinates near a bound with the gradient pushing outward get a
    // diagonally scaled gradient step; the rest a Newton step.
    const double band = std::min(1e-3, pg);
    std::vector<Eigen::Index> free_idx;
    Vec d = Vec::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lo = x[i] - set.lower[i] <= band && g[i] > 0.0;
      const bool at_hi = set.upper[i] - x[i] <= band && g[i] < 0.0;
      if (at_lo || at_hi) {
        d[i] = -g[i] / std::max(std::abs(H(i, i)), 1e-12);
      } else if (set.lower[i] < set.upper[i]) {
        free_idx.push_back(i);
      }
    }
    if (!free_idx.empty()) {
      const auto k = static_cast<Eigen::Index>(free_idx.size());
      DenseMat HF(k, k);
      Vec gF(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        gF[a] = g[free_idx[a]];
        for (Eigen::Index b = 0; b < k; ++b) HF(a, b) = H(free_idx[a], free_idx[b]);
      }
      Eigen::SelfAdjointEigenSolver<DenseMat> es(HF);
      Vec ev = es.eigenvalues().cwiseAbs();
      const double floor = std::max(1e-10 * ev.maxCoeff(), 1e-14);
      ev = ev.cwiseMax(floor);
      const Vec dF = -es.eigenvectors() * (es.eigenvectors().transpose() * gF).cwiseQuotient(ev);
      for (Eigen::Index a = 0; a < k; ++a) d[free_idx[a]] = dF[a];
    }

    bool accepted = false;
    Vec xn;
    double fn = 0.0;
    Vec gn;
    double step = 1.0;
    for (int h = 0; h < kMaxHalvings && !accepted; ++h, step *= 0.5) {
      xn = project_box(x + step * d, set.lower, set.upper);
      const double dec = g.dot(xn - x);
      if (!(dec < 0.0)) continue;
      fn = req.value(xn);
      if (!finite(fn)) continue;
      if (fn <= f + kArmijo * dec) {
        gn = req.gradient(xn);
        accepted = gn.allFinite();
      } else if (fn - f <= 1e-14 * (1.0 + std::abs(f))) {
        // Within rounding of f: accept only on a smaller projected gradient.
        gn = req.gradient(xn);
        accepted = gn.allFinite() && projected_gradient_norm(xn, gn, set.lower, set.upper) < 0.5 * pg;
      }
    }
    if (!accepted) {
      // Fall back to one projected-gradient step from x.
      BlockSolveRequest one = req;
      one.warm_start = x;
      one.options.max_iters = 1;
      const BlockSolveResult r = solve_box_pg(one);
      if (r.status == SolveStatus::NumericalFailure || r.inner_iterations == 0 || (r.x - x).squaredNorm() == 0.0) break;
      xn = r.x;
      fn = req.value(xn);
      gn = req.gradient(xn);
    }
    x = std::move(xn);
    f = fn;
    g = std::move(gn);
    pg = projected_gradient_norm(x, g, set.lower, set.upper);
  }
  res.x = std::move(x);
  res.pg_norm = pg;
  res.inner_iterations = it;
  res.status = pg <= tol ? SolveStatus::Converged : SolveStatus::IterationCap;
  return res;
}

BlockSolveResult solve_equality_alm(const BlockSolveRequest& req) {
  const auto& set = set_of(req);
  const SolverOptions& opt = req.options;
  const int r = static_cast<int>(set.equalities.size());
  BlockSolveResult res;
  res.solver = SolverKind::EqualityALM;

  const Vec x_warm = clipped_start(req);
  Vec x = x_warm;
  Vec y = (req.mu_warm && req.mu_warm->size() == r) ? *req.mu_warm : Vec::Zero(r);
  double sigma = opt.alm_sigma0;

  Vec c = equality_values(set, x);
  double viol = inf_norm(c);
  double prev_viol = viol;

  Vec best_x = x;
  Vec best_y = y;
  double best_viol = viol;
  double best_pg = std::numeric_limits<double>::infinity();
  int total_iters = 0;
  bool converged = false;

  for (int round = 0; round < opt.alm_max_rounds; ++round) {
    BlockSolveRequest inner;
    inner.t = req.t;
    inner.set = req.set;
    inner.warm_start = x;
    inner.options = opt;
    const Vec y_now = y;
    const double s_now = sigma;
    inner.value = [&](const Vec& v) {
      const Vec cv = equality_values(set, v);
      return req.value(v) + y_now.dot(cv) + 0.5 * s_now * cv.squaredNorm();
    };
    inner.gradient = [&](const Vec& v) {
      const Vec cv = equality_values(set, v);
      return Vec(req.gradient(v) + equality_jacobian(set, v).transpose() * (y_now + s_now * cv));
    };
    BlockSolveResult sub = opt.alm_inner_newton ? solve_box_newton(inner) : solve_box_pg(inner);
    total_iters += sub.inner_iterations;
    if (sub.status == SolveStatus::NumericalFailure) {
      res.x = x;
      res.mu = y;
      res.status = SolveStatus::NumericalFailure;
      res.inner_iterations = total_iters;
      return res;
    }
    x = sub.x;
    c = equality_values(set, x);
    viol = inf_norm(c);
    y += sigma * c;
    if (!y.allFinite()) {
      res.x = x;
      res.mu = y;
      res.status = SolveStatus::NumericalFailure;
      res.inner_iterations = total_iters;
      return res;
    }
    if (viol <= best_viol || viol <= opt.tol) {
      best_x = x;
      best_y = y;
      best_viol = viol;
      best_pg = sub.pg_norm;
    }
    if (viol <= opt.tol && sub.pg_norm <= opt.tol) {
      converged = true;
      best_x = x;
      best_y = y;
      best_viol = viol;
      best_pg = sub.pg_norm;
      break;
    }
    if (viol > 0.25 * prev_viol) {
      if (sigma >= opt.alm_sigma_cap && viol > opt.tol) break;
      sigma = std::min(10.0 * sigma, opt.alm_sigma_cap);
    }
    prev_viol = viol;
  }

  res.x = best_x;
  res.mu = best_y;
  res.eq_violation = best_viol;
  res.pg_norm = best_pg;
  res.inner_iterations = total_iters;
  res.status = converged ? SolveStatus::Converged : SolveStatus::IterationCap;

  // Never return something worse than a feasible warm start.
  const double f_warm = req.value(x_warm);
  const double f_res = req.value(res.x);
  if (inf_norm(equality_values(set, x_warm)) <= opt.tol && f_res > f_warm + 1e-12 * (1.0 + std::abs(f_warm))) {
    res.x = x_warm;
    res.eq_violation = inf_norm(equality_values(set, x_warm));
    res.status = SolveStatus::IterationCap;
  }
  return res;
}

SolverKind route(const BlockSolveRequest& req) {
  const auto& set = set_of(req);
  if (set.has_equalities()) return SolverKind::EqualityALM;
  if (req.quadratic && !set.has_finite_bounds()) return SolverKind::QuadraticExact;
  return SolverKind::BoxPG;
}

BlockSolveResult dispatch(const BlockSolveRequest& req, SolverKind forced) {
  const SolverKind kind = forced == SolverKind::Auto ? route(req) : forced;
  switch (kind) {
    case SolverKind::QuadraticExact: {
      BlockSolveResult r = solve_quadratic_exact(req);
      if (r.status == SolveStatus::NumericalFailure && forced == SolverKind::Auto) return solve_box_pg(req);
      return r;
    }
    case SolverKind::BoxPG:
      return solve_box_pg(req);
    case SolverKind::EqualityALM:
      return solve_equality_alm(req);
    case SolverKind::Auto:
      break;
  }
  throw std::logic_error("dispatch: unroutable request");
}

}  // namespace proxjac
