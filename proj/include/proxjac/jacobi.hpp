#pragma once

#include <condition_variable>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "proxjac/auglag.hpp"
#include "proxjac/model.hpp"
#include "proxjac/subsolver.hpp"

namespace proxjac {

/// Fork-join pool. run(count, fn) calls fn(i) once for every i in [0, count)
/// and returns after all calls finished. Zero workers runs inline.
class WorkerPool {
 public:
  explicit WorkerPool(int workers);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int workers() const { return static_cast<int>(threads_.size()); }
  void run(int count, const std::function<void(int)>& fn);

 private:
  void loop();

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(int)>* job_ = nullptr;
  int count_ = 0;
  int next_ = 0;
  int pending_ = 0;
  long generation_ = 0;
  bool stop_ = false;
};

/// One row of the iteration trace. Identity residuals are relative to the
/// largest term entering each identity.
struct TraceRecord {
  int k = 0;
  double phi = 0.0;
  double dphi = 0.0;
  double coupling_inf = 0.0;
  double p_inf = 0.0;
  double d_inf = 0.0;
  double pi = 0.0;
  double delta_max = 0.0;
  Params params;
  double t_xupd_ms = 0.0;
  double t_zupd_ms = 0.0;
  double t_lupd_ms = 0.0;
  long inner_iters_total = 0;
  std::vector<int> inner_iters;

  double mult_res = 0.0;     // lambda^k + theta z^k + tau_z dz^k
  double dlambda_res = 0.0;    // dlambda^k against the dz recursion
  double p_dlambda_res = 0.0;  // rho p^k - dlambda^k
  double zstat_res = 0.0;      // z-subproblem stationarity
  double dx_sq = 0.0;          // sum_t |dx_t^k|^2_{A_t^T A_t}
  double dx_prev_sq = 0.0;     // sum_t |dx_t^{k-1}|^2_{A_t^T A_t}
  double dz_sq = 0.0;
  double dz_prev_sq = 0.0;
  bool all_converged = true;
  std::vector<double> delta;  // per block, NaN when undefined
};

using TraceSink = std::function<void(const TraceRecord&)>;
using StopPredicate = std::function<bool(const TraceRecord&, const IterateState&)>;

struct RunConfig {
  int max_iters = 1000;
  int workers = 0;
  TraceSink sink;
  std::map<int, SolverKind> overrides;  // block index -> forced solver
  bool parallel_z = false;              // z from x^{k-1} instead of x^k
  SolverOptions inner;
  StopPredicate stop;
};

/// Raised when a block solve reports numerical failure.
class BlockFailure : public std::runtime_error {
 public:
  BlockFailure(int block, const std::string& what) : std::runtime_error(what), block_(block) {}
  int block() const { return block_; }

 private:
  int block_;
};

/// Per-run state owned by the runner: the iterate plus bookkeeping that the
/// identities need across parameter changes.
struct RunnerState {
  IterateState it;
  Params params_prev;  // parameters of the previous iteration (initial ones at k = 0)
  double phi = 0.0;    // Phi^k as recorded
  BlockVecs mu;        // last equality multipliers per block
};

IterateState init_state(const Problem& p, const BlockVecs& x0, const Vec& z0, const Vec& lambda0,
                        const Params& params);

/// Jacobi block solves from (x^{k-1}, z^{k-1}, lambda^{k-1}). Results are
/// independent of the pool size.
struct XUpdate {
  BlockVecs x;
  BlockVecs mu;
  std::vector<int> inner_iters;
  std::vector<SolveStatus> statuses;
};
XUpdate x_update_all(const Problem& p, const IterateState& state, const Params& params, const RunConfig& config,
                     WorkerPool& pool, const BlockVecs* mu_warm = nullptr);

/// z^k = (tau_z z^{k-1} - rho (A x^k - b) - lambda^{k-1}) / (tau_z + rho + theta).
Vec z_update(const Problem& p, const BlockVecs& x_k, const IterateState& state, const Params& params);

/// lambda^k = lambda^{k-1} + rho (A x^k + z^k - b).
Vec lambda_update(const Problem& p, const IterateState& state, const BlockVecs& x_k, const Vec& z_k,
                  const Params& params);

RunnerState make_runner_state(const Problem& p, const BlockVecs& x0, const Vec& z0, const Vec& lambda0,
                              const Params& params);

/// One pass of the loop body; advances `rs` in place. Throws BlockFailure.
TraceRecord iterate(const Problem& p, RunnerState& rs, const Params& params, const RunConfig& config,
                    WorkerPool& pool);

enum class RunStatus { Completed, Stopped, BlockFailed };

struct RunResult {
  RunnerState state;
  std::vector<TraceRecord> trace;
  RunStatus status = RunStatus::Completed;
  int failed_block = -1;
  std::string message;
};

struct InitialPoint {
  BlockVecs x0;
  Vec z0;
  Vec lambda0;
};

/// Midpoint of finite boxes (0 on infinite sides, clipped into the box), z = 0, lambda = 0.
InitialPoint default_initial_point(const Problem& p);

RunResult run_fixed(const Problem& p, const Params& params, const InitialPoint& init, const RunConfig& config);

/// Column names in CSV order; the first 15 are the fixed contract.
std::vector<std::string> trace_columns(int T);
void write_trace_header(std::ostream& os, int T);
/// timing=false writes 0 in the wall-clock columns.
void write_trace_row(std::ostream& os, const TraceRecord& r, bool timing = true);
void write_trace_csv(const std::string& path, const std::vector<TraceRecord>& trace, int T, bool timing = true);

}  // namespace proxjac
