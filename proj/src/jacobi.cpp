#include "proxjac/jacobi.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <ostream>

#include "proxjac/algebra.hpp"

namespace proxjac {

WorkerPool::WorkerPool(int workers) {
  for (int i = 0; i < workers; ++i) threads_.emplace_back([this] { loop(); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    stop_ = true;
  }
  wake_.notify_all();
  for (auto& th : threads_) th.join();
}

void WorkerPool::run(int count, const std::function<void(int)>& fn) {
  if (threads_.empty() || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::unique_lock<std::mutex> lk(mu_);
  job_ = &fn;
  count_ = count;
  next_ = 0;
  pending_ = count;
  ++generation_;
  lk.unlock();
  wake_.notify_all();
  lk.lock();
  done_.wait(lk, [this] { return pending_ == 0; });
  job_ = nullptr;
}

void WorkerPool::loop() {
  std::unique_lock<std::mutex> lk(mu_);
  for (;;) {
    wake_.wait(lk, [this] { return stop_ || (job_ != nullptr && next_ < count_); });
    if (stop_) return;
    const int i = next_++;
    const auto* job = job_;
    lk.unlock();
    (*job)(i);
    lk.lock();
    if (--pending_ == 0) done_.notify_all();
  }
}

namespace {

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

/// |res|_inf divided by the largest term; 0 when every term vanishes.
double relative(const Vec& res, std::initializer_list<Vec> terms) {
  double scale = 0.0;
  for (const auto& t : terms) scale = std::max(scale, inf_norm(t));
  const double r = inf_norm(res);
  if (scale == 0.0) return r;
  return r / scale;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

void check_init(const Problem& p, const BlockVecs& x0, const Vec& z0, const Vec& lambda0) {
  if (static_cast<int>(x0.size()) != p.T()) throw DimensionError("init_state: block count mismatch");
  for (int t = 0; t < p.T(); ++t) {
    if (x0[t].size() != p.blocks[t].n) throw DimensionError("init_state: block " + std::to_string(t) + " dimension");
  }
  if (z0.size() != p.m || lambda0.size() != p.m) throw DimensionError("init_state: z0/lambda0 length != m");
}

}  // namespace

IterateState init_state(const Problem& p, const BlockVecs& x0, const Vec& z0, const Vec& lambda0,
                        const Params& params) {
  check_init(p, x0, z0, lambda0);
  IterateState s;
  for (int t = 0; t < p.T(); ++t) s.x.push_back(project_box(x0[t], p.blocks[t].set.lower, p.blocks[t].set.upper));
  s.z = z0;
  s.lambda = lambda0;
  s.x_prev = s.x;
  s.z_prev = z0;
  s.lambda_prev = lambda0;
  s.dz = params.tau_z > 0.0 ? Vec(-(lambda0 + params.theta * z0) / params.tau_z) : Vec(Vec::Zero(p.m));
  s.dz_prev = Vec::Zero(p.m);
  for (int t = 0; t < p.T(); ++t) s.dx_prev.push_back(Vec::Zero(p.blocks[t].n));
  s.k = 0;
  return s;
}

XUpdate x_update_all(const Problem& p, const IterateState& state, const Params& params, const RunConfig& config,
                     WorkerPool& pool, const BlockVecs* mu_warm) {
  const int T = p.T();
  std::vector<BlockSolveResult> results(T);
  std::vector<std::exception_ptr> errors(T);
  pool.run(T, [&](int t) {
    try {
      const BlockObjective obj(p, t, state.x, state.z, state.lambda, params, state.x[t]);
      BlockSolveRequest req = make_request(obj, state.x[t], config.inner);
      if (mu_warm != nullptr && static_cast<int>(mu_warm->size()) == T &&
          (*mu_warm)[t].size() == static_cast<Eigen::Index>(p.blocks[t].set.equalities.size())) {
        req.mu_warm = (*mu_warm)[t];
      }
      const auto it = config.overrides.find(t);
      results[t] = dispatch(req, it == config.overrides.end() ? SolverKind::Auto : it->second);
    } catch (...) {
      errors[t] = std::current_exception();
    }
  });
  for (int t = 0; t < T; ++t) {
    if (errors[t]) std::rethrow_exception(errors[t]);
  }
  XUpdate out;
  for (int t = 0; t < T; ++t) {
    if (results[t].status == SolveStatus::NumericalFailure) {
      throw BlockFailure(t, "block " + std::to_string(t) + ": numerical failure in " + to_string(results[t].solver));
    }
    out.x.push_back(std::move(results[t].x));
    out.mu.push_back(std::move(results[t].mu));
    out.inner_iters.push_back(results[t].inner_iterations);
    out.statuses.push_back(results[t].status);
  }
  return out;
}

Vec z_update(const Problem& p, const BlockVecs& x_k, const IterateState& state, const Params& params) {
  const double denom = params.tau_z + params.rho + params.theta;
  if (!(denom > 0.0)) throw std::invalid_argument("z_update: tau_z + rho + theta must be positive");
  const Vec viol = couple_apply(p, x_k) - p.b;
  return (params.tau_z * state.z - params.rho * viol - state.lambda) / denom;
}

Vec lambda_update(const Problem& p, const IterateState& state, const BlockVecs& x_k, const Vec& z_k,
                  const Params& params) {
  return state.lambda + params.rho * (couple_apply(p, x_k) + z_k - p.b);
}

RunnerState make_runner_state(const Problem& p, const BlockVecs& x0, const Vec& z0, const Vec& lambda0,
                              const Params& params) {
  RunnerState rs;
  rs.it = init_state(p, x0, z0, lambda0, params);
  rs.params_prev = params;
  rs.phi = lyapunov_initial(p, rs.it.x, rs.it.z, rs.it.lambda, params);
  rs.mu.resize(p.T());
  return rs;
}

TraceRecord iterate(const Problem& p, RunnerState& rs, const Params& params, const RunConfig& config,
                    WorkerPool& pool) {
  const IterateState& old = rs.it;
  TraceRecord rec;
  rec.k = old.k + 1;
  rec.params = params;

  auto t0 = std::chrono::steady_clock::now();
  XUpdate xu = x_update_all(p, old, params, config, pool, &rs.mu);
  rec.t_xupd_ms = elapsed_ms(t0);

  t0 = std::chrono::steady_clock::now();
  const Vec z = z_update(p, config.parallel_z ? old.x : xu.x, old, params);
  rec.t_zupd_ms = elapsed_ms(t0);

  t0 = std::chrono::steady_clock::now();
  const Vec lambda = lambda_update(p, old, xu.x, z, params);
  rec.t_lupd_ms = elapsed_ms(t0);

  IterateState nw;
  nw.k = rec.k;
  nw.x_prev = old.x;
  nw.z_prev = old.z;
  nw.lambda_prev = old.lambda;
  nw.dz_prev = old.dz;
  for (int t = 0; t < p.T(); ++t) nw.dx_prev.push_back(old.x[t] - old.x_prev[t]);
  nw.x = std::move(xu.x);
  nw.z = z;
  nw.lambda = lambda;
  nw.dz = z - old.z;

  rec.phi = lyapunov(p, nw.x, nw.z, nw.lambda, nw.x_prev, nw.z_prev, params);
  rec.dphi = rec.phi - rs.phi;

  const ResidualSnapshot snap = penalty_residuals(p, nw, params);
  rec.coupling_inf = snap.infnorm_coupling;
  rec.p_inf = snap.infnorm_p;
  rec.d_inf = snap.infnorm_d;
  rec.pi = snap.pi;
  rec.delta = snap.delta;
  rec.delta_max = 0.0;
  for (double d : snap.delta) {
    if (std::isnan(d)) {
      rec.delta_max = std::numeric_limits<double>::quiet_NaN();
      break;
    }
    rec.delta_max = std::max(rec.delta_max, d);
  }

  rec.inner_iters = xu.inner_iters;
  for (int n : xu.inner_iters) rec.inner_iters_total += n;
  for (auto s : xu.statuses) rec.all_converged = rec.all_converged && s == SolveStatus::Converged;

  for (int t = 0; t < p.T(); ++t) {
    rec.dx_sq += seminorm_sq(p.blocks[t].A, nw.x[t] - nw.x_prev[t]);
    rec.dx_prev_sq += seminorm_sq(p.blocks[t].A, nw.dx_prev[t]);
  }
  rec.dz_sq = nw.dz.squaredNorm();
  rec.dz_prev_sq = nw.dz_prev.squaredNorm();

  const Params& q = rs.params_prev;
  const Vec viol = couple_apply(p, nw.x) - p.b;
  const Vec rho_viol = params.rho * viol;
  const Vec rho_z = params.rho * nw.z;
  const Vec theta_z = params.theta * nw.z;
  const Vec tau_dz = params.tau_z * nw.dz;
  const Vec dlambda = nw.lambda - nw.lambda_prev;
  rec.mult_res = relative(nw.lambda + theta_z + tau_dz, {nw.lambda, theta_z, tau_dz, nw.lambda_prev, rho_viol, rho_z});
  rec.zstat_res = relative(nw.lambda_prev + rho_viol + rho_z + theta_z + tau_dz,
                           {nw.lambda_prev, rho_viol, rho_z, theta_z, Vec(params.tau_z * nw.z),
                            Vec(params.tau_z * nw.z_prev)});
  rec.p_dlambda_res = relative(rho_viol + rho_z - dlambda, {rho_viol, rho_z, nw.lambda, nw.lambda_prev});
  const Vec theta_z_prev = q.theta * nw.z_prev;
  const Vec tau_dz_prev = q.tau_z * nw.dz_prev;
  rec.dlambda_res = relative(dlambda + theta_z + tau_dz - theta_z_prev - tau_dz_prev,
                             {nw.lambda, nw.lambda_prev, theta_z, tau_dz, theta_z_prev, tau_dz_prev, rho_viol, rho_z});

  rs.it = std::move(nw);
  rs.params_prev = params;
  rs.phi = rec.phi;
  for (int t = 0; t < p.T(); ++t) {
    if (xu.mu[t].size() > 0) rs.mu[t] = std::move(xu.mu[t]);
  }
  return rec;
}

InitialPoint default_initial_point(const Problem& p) {
  InitialPoint init;
  for (const auto& blk : p.blocks) {
    Vec x(blk.n);
    for (int i = 0; i < blk.n; ++i) {
      const double lo = blk.set.lower[i];
      const double hi = blk.set.upper[i];
      x[i] = std::isfinite(lo) && std::isfinite(hi) ? 0.5 * (lo + hi) : std::clamp(0.0, lo, hi);
    }
    init.x0.push_back(std::move(x));
  }
  init.z0 = Vec::Zero(p.m);
  init.lambda0 = Vec::Zero(p.m);
  return init;
}

RunResult run_fixed(const Problem& p, const Params& params, const InitialPoint& init, const RunConfig& config) {
  RunResult res;
  res.state = make_runner_state(p, init.x0, init.z0, init.lambda0, params);
  WorkerPool pool(config.workers);
  for (int k = 1; k <= config.max_iters; ++k) {
    TraceRecord rec;
    try {
      rec = iterate(p, res.state, params, config, pool);
    } catch (const BlockFailure& e) {
      res.status = RunStatus::BlockFailed;
      res.failed_block = e.block();
      res.message = e.what();
      return res;
    }
    if (config.sink) config.sink(rec);
    res.trace.push_back(rec);
    if (config.stop && config.stop(rec, res.state.it)) {
      res.status = RunStatus::Stopped;
      return res;
    }
  }
  res.status = RunStatus::Completed;
  return res;
}

std::vector<std::string> trace_columns(int T) {
  std::vector<std::string> cols{"k",     "phi",   "dphi",  "coupling_inf", "p_inf",     "d_inf",     "pi",
                                "delta_max", "rho", "theta", "tau_x",   "tau_z", "t_xupd_ms", "t_zupd_ms",
                                "inner_iters_total"};
  for (const char* c : {"t_lupd_ms", "mult_res", "dlambda_res", "p_dlambda_res", "zstat_res", "dx_sq",
                        "dx_prev_sq", "dz_sq", "dz_prev_sq", "all_converged"}) {
    cols.emplace_back(c);
  }
  for (int t = 1; t <= T; ++t) cols.push_back("delta_" + std::to_string(t));
  return cols;
}

void write_trace_header(std::ostream& os, int T) {
  const auto cols = trace_columns(T);
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
}

namespace {

void put(std::ostream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << ',' << buf;
}

}  // namespace

void write_trace_row(std::ostream& os, const TraceRecord& r, bool timing) {
  os << r.k;
  for (double v : {r.phi, r.dphi, r.coupling_inf, r.p_inf, r.d_inf, r.pi, r.delta_max, r.params.rho,
                   r.params.theta, r.params.tau_x, r.params.tau_z}) {
    put(os, v);
  }
  put(os, timing ? r.t_xupd_ms : 0.0);
  put(os, timing ? r.t_zupd_ms : 0.0);
  os << ',' << r.inner_iters_total;
  put(os, timing ? r.t_lupd_ms : 0.0);
  for (double v : {r.mult_res, r.dlambda_res, r.p_dlambda_res, r.zstat_res, r.dx_sq, r.dx_prev_sq, r.dz_sq,
                   r.dz_prev_sq}) {
    put(os, v);
  }
  os << ',' << (r.all_converged ? 1 : 0);
  for (double d : r.delta) put(os, d);
  os << '\n';
}

void write_trace_csv(const std::string& path, const std::vector<TraceRecord>& trace, int T, bool timing) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open trace file " + path);
  write_trace_header(os, T);
  for (const auto& r : trace) write_trace_row(os, r, timing);
  if (!os) throw std::runtime_error("write failed for trace file " + path);
}

}  // namespace proxjac
