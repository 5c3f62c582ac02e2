#include "proxjac/cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "proxjac/algebra.hpp"
#include "proxjac/auglag.hpp"
#include "proxjac/jacobi.hpp"
#include "proxjac/problems.hpp"
#include "proxjac/tuner.hpp"

namespace proxjac::cli {

void configure_logging() {
  auto logger = spdlog::get("proxjacobi");
  if (!logger) logger = spdlog::stderr_color_mt("proxjacobi");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("PROXJACOBI_LOG");
  const std::string level = env ? env : "error";
  if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else if (level == "info") spdlog::set_level(spdlog::level::info);
  else spdlog::set_level(spdlog::level::err);
}

namespace {

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json vec_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json blocks_json(const BlockVecs& x) {
  Json a = Json::array();
  for (const auto& v : x) a.push_back(vec_json(v));
  return a;
}

Json params_json(const Params& p) {
  return Json{{"rho", p.rho}, {"theta", p.theta}, {"tau_x", p.tau_x}, {"tau_z", p.tau_z}};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path);
}

Problem load_valid_problem(const std::string& path) {
  Problem p = load_problem_file(path);
  const ValidationReport rep = validate_problem(p);
  if (!rep.ok()) throw ProblemError(path + ": " + rep.errors.front());
  return p;
}

TunerConfig build_tuner_config(const SolveOptions& opt) {
  TunerConfig cfg;
  if (!opt.config_path.empty()) cfg = load_tuner_config(opt.config_path, cfg);
  std::string text;
  for (const auto& [key, value] : opt.tuner_overrides) text += key + " = " + fmt_num(value) + "\n";
  cfg = parse_tuner_config(text, cfg);
  if (opt.eps) cfg.eps = *opt.eps;
  if (opt.max_iters) cfg.max_iters = *opt.max_iters;
  validate_tuner_config(cfg);
  return cfg;
}

int count_phi_increases(const std::vector<TraceRecord>& trace) {
  int n = 0;
  for (const auto& r : trace) n += r.dphi > 1e-8 * (1.0 + std::abs(r.phi)) ? 1 : 0;
  return n;
}

}  // namespace

int cmd_solve(const SolveOptions& opt, std::ostream& out, std::ostream& err) {
  Problem p;
  TunerConfig cfg;
  try {
    p = load_valid_problem(opt.problem_path);
    cfg = build_tuner_config(opt);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
  if (opt.workers < 0) {
    err << "error: --workers must be >= 0\n";
    return kIoError;
  }

  std::ofstream trace;
  if (!opt.trace_path.empty()) {
    trace.open(opt.trace_path);
    if (!trace) {
      err << "error: cannot open " << opt.trace_path << " for writing\n";
      return kIoError;
    }
    write_trace_header(trace, p.T());
  }

  RunConfig rc;
  rc.workers = opt.workers;
  rc.sink = [&](const TraceRecord& r) {
    if (trace.is_open()) write_trace_row(trace, r, opt.timing);
    spdlog::debug("k={} phi={:.6e} |Ax-b|inf={:.3e} p={:.3e} d={:.3e} rho={:.3e} tau_x={:.3e}", r.k, r.phi,
                  r.coupling_inf, r.p_inf, r.d_inf, r.params.rho, r.params.tau_x);
    if (r.k % 100 == 0) spdlog::info("k={} |Ax-b|inf={:.3e}", r.k, r.coupling_inf);
  };

  const InitialPoint init = default_initial_point(p);
  std::string termination;
  int code = kOk;
  RunnerState state;
  std::vector<TraceRecord> records;
  Params final_params;
  Json extra = Json::object();
  try {
    if (opt.fixed_params) {
      Params prm = convergence_params(cfg.eps, p.T());
      if (opt.rho) prm.rho = *opt.rho;
      if (opt.theta) prm.theta = *opt.theta;
      if (opt.tau_x) prm.tau_x = *opt.tau_x;
      if (opt.tau_z) prm.tau_z = *opt.tau_z;
      if (!(prm.rho > 0.0) || prm.theta < 0.0 || prm.tau_x < 0.0 || prm.tau_z < 0.0) {
        err << "error: fixed parameters need rho > 0 and theta, tau_x, tau_z >= 0\n";
        return kIoError;
      }
      rc.max_iters = cfg.max_iters;
      const double eps = cfg.eps;
      rc.stop = [eps](const TraceRecord& r, const IterateState&) { return r.coupling_inf <= eps; };
      RunResult res = run_fixed(p, prm, init, rc);
      state = std::move(res.state);
      records = std::move(res.trace);
      final_params = prm;
      const EtaPair eta = eta_pair(prm, p.T());
      extra["eta"] = Json{{"eta_x", eta.eta_x}, {"eta_z", eta.eta_z}, {"feasible", eta.feasible}};
      switch (res.status) {
        case RunStatus::Stopped:
          termination = to_string(Termination::FeasibleStop);
          break;
        case RunStatus::Completed:
          termination = to_string(Termination::IterationCap);
          code = kIterationCap;
          break;
        case RunStatus::BlockFailed:
          termination = to_string(Termination::BlockFailure);
          code = kNumericalFailure;
          extra["failed_block"] = res.failed_block;
          err << "error: " << res.message << '\n';
          break;
      }
      const int ups = count_phi_increases(records);
      extra["phi_increases"] = ups;
      if (ups > 0) spdlog::warn("Lyapunov function increased on {} of {} iterations", ups, records.size());
    } else {
      AdaptiveResult res = run_adaptive(p, cfg, init, rc);
      state = std::move(res.state);
      records = std::move(res.trace);
      final_params = res.tuner.params;
      extra["psi"] = res.tuner.psi;
      termination = to_string(res.termination);
      if (res.termination == Termination::IterationCap) code = kIterationCap;
      if (res.termination == Termination::BlockFailure) {
        code = kNumericalFailure;
        extra["failed_block"] = res.failed_block;
        err << "error: " << res.message << '\n';
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumericalFailure;
  }
  if (trace.is_open()) {
    trace.flush();
    if (!trace) {
      err << "error: write failed for " << opt.trace_path << '\n';
      return kIoError;
    }
  }

  const Vec viol = couple_apply(p, state.it.x) - p.b;
  Json residuals{{"pi", viol.norm()}, {"coupling_inf", viol.size() ? viol.cwiseAbs().maxCoeff() : 0.0}};
  if (!records.empty()) {
    const TraceRecord& last = records.back();
    residuals["p_inf"] = last.p_inf;
    residuals["d_inf"] = last.d_inf;
    Json d = Json::array();
    for (double v : last.delta) d.push_back(std::isnan(v) ? Json(nullptr) : Json(v));
    residuals["delta"] = d;
  }
  if (!opt.solution_path.empty()) {
    Json sol{{"termination", termination},
             {"iterations", static_cast<int>(records.size())},
             {"x", blocks_json(state.it.x)},
             {"z", vec_json(state.it.z)},
             {"lambda", vec_json(state.it.lambda)},
             {"residuals", residuals},
             {"params", params_json(final_params)},
             {"fixed_params", opt.fixed_params}};
    sol.update(extra);
    try {
      write_text(opt.solution_path, sol.dump(2) + "\n");
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kIoError;
    }
  }
  out << "termination: " << termination << "\niterations: " << records.size()
      << "\n|Ax-b|_inf: " << fmt_num(residuals["coupling_inf"].get<double>()) << '\n';
  return code;
}

int cmd_validate(const std::string& problem_path, std::ostream& out, std::ostream& err) {
  Problem p;
  try {
    p = load_problem_file(problem_path);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
  const ValidationReport rep = validate_problem(p);
  for (const auto& w : rep.warnings) out << "warning: " << w << '\n';
  for (const auto& e : rep.errors) out << "error: " << e << '\n';
  out << (rep.ok() ? "valid" : "invalid") << ": T=" << p.T() << " m=" << p.m << " n=" << p.total_dim() << '\n';
  return rep.ok() ? kOk : kInvalidProblem;
}

namespace {

std::string default_oracle_path(const std::string& out) {
  const std::string ext = ".json";
  if (out.size() > ext.size() && out.compare(out.size() - ext.size(), ext.size(), ext) == 0) {
    return out.substr(0, out.size() - ext.size()) + ".oracle.json";
  }
  return out + ".oracle.json";
}

void scale_loads(NetworkData& net, double s) {
  for (auto& row : net.load_p) for (auto& v : row) v *= s;
  for (auto& row : net.load_q) for (auto& v : row) v *= s;
}

}  // namespace

int cmd_generate(const GenerateOptions& opt, std::ostream& out, std::ostream& err) {
  if (opt.out_path.empty()) {
    err << "error: --out is required\n";
    return kIoError;
  }
  const std::string oracle_path = opt.oracle_path.empty() ? default_oracle_path(opt.out_path) : opt.oracle_path;
  try {
    Problem p;
    std::optional<OracleSolution> oracle;
    if (opt.kind == "coupled-qp") {
      auto [prob, orc] = gen_coupled_qp(opt.seed, opt.T, opt.n, opt.m);
      p = std::move(prob);
      oracle = std::move(orc);
    } else if (opt.kind == "acopf-toy") {
      NetworkData net;
      if (!opt.network_path.empty()) {
        std::ifstream f(opt.network_path);
        if (!f) throw std::runtime_error("cannot open " + opt.network_path);
        net = network_from_json(Json::parse(f));
      } else {
        net = toy_network(opt.buses, opt.periods, opt.seed);
      }
      if (!(opt.load_scale > 0.0) || !(opt.objective_scale > 0.0)) {
        throw std::invalid_argument("load and objective scales must be > 0");
      }
      scale_loads(net, opt.load_scale);
      net.objective_scale = opt.objective_scale;
      p = gen_acopf_toy(net, opt.periods);
      p.metadata["load_scale"] = opt.load_scale;
      p.metadata["seed"] = opt.seed;
    } else if (opt.kind == "dispatch") {
      const NetworkData net = toy_network(std::max(opt.buses, 2), opt.periods, opt.seed);
      std::vector<double> profile;
      for (const auto& row : net.load_p) {
        double s = 0.0;
        for (double v : row) s += v;
        profile.push_back(s * opt.load_scale);
      }
      p = gen_multiperiod_dispatch(opt.periods, net.generators, opt.ramp_frac, profile, net.delta_t);
      p.metadata["seed"] = opt.seed;
      try {
        oracle = kkt_reference_solve(p);
      } catch (const std::exception& e) {
        spdlog::info("no oracle written: {}", e.what());
      }
    } else if (opt.kind == "split") {
      if (opt.input_path.empty()) throw std::invalid_argument("split needs --input");
      p = variable_splitting_transform(load_valid_problem(opt.input_path));
    } else {
      throw std::invalid_argument("unknown kind \"" + opt.kind + "\" (dispatch, acopf-toy, coupled-qp, split)");
    }
    write_text(opt.out_path, serialize_problem(p) + "\n");
    out << "wrote " << opt.out_path << " (T=" << p.T() << ", m=" << p.m << ", n=" << p.total_dim() << ")\n";
    if (oracle) {
      write_text(oracle_path, oracle_to_json(*oracle).dump(2) + "\n");
      out << "wrote " << oracle_path << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
  return kOk;
}

namespace {

struct TraceTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  int col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw std::runtime_error("trace lacks column " + name);
  }
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

TraceTable read_trace(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  TraceTable tab;
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error(path + ": empty trace");
  tab.header = split_csv(line);
  int lineno = 1;
  bool last_had_newline = true;
  while (std::getline(f, line)) {
    ++lineno;
    last_had_newline = !f.eof();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != tab.header.size()) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(tab.header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (c.empty() || end != c.c_str() + c.size()) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed field \"" + c + "\"");
      }
      row.push_back(v);
    }
    tab.rows.push_back(std::move(row));
  }
  if (!last_had_newline) throw std::runtime_error(path + ": last row is not newline-terminated (truncated)");
  if (tab.rows.empty()) throw std::runtime_error(path + ": trace has no iterations");
  return tab;
}

struct Outcome {
  std::string status;  // PASS | FAIL | SKIP
  std::string detail;
};

}  // namespace

int cmd_trace_check(const TraceCheckOptions& opt, std::ostream& out, std::ostream& err) {
  Problem p;
  TraceTable tab;
  try {
    p = load_valid_problem(opt.problem_path);
    tab = read_trace(opt.trace_path);
    if (tab.header != trace_columns(p.T())) {
      throw std::runtime_error("trace/problem mismatch: header does not match a T=" + std::to_string(p.T()) +
                               " trace");
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
  const int T = p.T();
  const int K = static_cast<int>(tab.rows.size());
  const int c_k = tab.col("k"), c_phi = tab.col("phi"), c_dphi = tab.col("dphi"), c_pi = tab.col("pi");
  const int c_rho = tab.col("rho"), c_theta = tab.col("theta"), c_tx = tab.col("tau_x"), c_tz = tab.col("tau_z");
  const int c_dx = tab.col("dx_sq"), c_dxp = tab.col("dx_prev_sq"), c_dz = tab.col("dz_sq"),
            c_dzp = tab.col("dz_prev_sq");
  const int c_delta0 = tab.col("delta_1");

  for (int i = 0; i < K; ++i) {
    if (tab.rows[i][c_k] != i + 1) {
      err << "error: row " << i + 1 << " has k=" << tab.rows[i][c_k] << " (rows must be consecutive from 1)\n";
      return kIoError;
    }
  }

  auto params_of = [&](int i) {
    const auto& r = tab.rows[i];
    return Params{r[c_rho], r[c_theta], r[c_tx], r[c_tz]};
  };
  bool constant = true;
  for (int i = 1; i < K; ++i) constant = constant && params_of(i) == params_of(0);

  // Rows under the monotonicity rule: the whole trace for constant parameters,
  // otherwise rows with feasible eta whose parameters equal the previous row's.
  std::vector<int> mono_rows;
  std::vector<int> eta_rows;  // rows with feasible eta and unchanged parameters
  for (int i = 0; i < K; ++i) {
    const Params prm = params_of(i);
    const bool unchanged = i == 0 || prm == params_of(i - 1);
    const bool feasible = eta_pair(prm, T).feasible;
    if (feasible && unchanged) eta_rows.push_back(i);
    if (constant || (feasible && unchanged)) mono_rows.push_back(i);
  }

  std::vector<std::pair<std::string, Outcome>> report;

  {
    Outcome o{"PASS", ""};
    int bad = 0;
    double worst = 0.0;
    for (const char* name : {"mult_res", "dlambda_res", "p_dlambda_res", "zstat_res"}) {
      const int c = tab.col(name);
      for (int i = 0; i < K; ++i) {
        const double v = tab.rows[i][c];
        if (!(v <= opt.identity_tol)) ++bad;
        if (!(v <= worst)) worst = v;
      }
    }
    o.detail = "max residual " + fmt_num(worst) + " over " + std::to_string(K) + " rows";
    if (bad > 0) o = {"FAIL", std::to_string(bad) + " entries above " + fmt_num(opt.identity_tol) + "; " + o.detail};
    report.emplace_back("identities", o);
  }

  {
    Outcome o{"PASS", ""};
    int first_bad = -1, bad = 0;
    for (int i : mono_rows) {
      const auto& r = tab.rows[i];
      if (!(r[c_dphi] <= opt.descent_tol * (1.0 + std::abs(r[c_phi])))) {
        ++bad;
        if (first_bad < 0) first_bad = i + 1;
      }
    }
    o.detail = "checked " + std::to_string(mono_rows.size()) + " rows";
    if (bad > 0) o = {"FAIL", std::to_string(bad) + " increases, first at k=" + std::to_string(first_bad) + "; " + o.detail};
    else if (mono_rows.empty()) o = {"SKIP", "no rows with feasible eta"};
    report.emplace_back("monotonicity", o);
  }

  {
    Outcome o{"PASS", ""};
    int bad = 0;
    for (int i : eta_rows) {
      const auto& r = tab.rows[i];
      const EtaPair eta = eta_pair(params_of(i), T);
      const double rhs = -eta.eta_x * (r[c_dx] + r[c_dxp]) - eta.eta_z * (r[c_dz] + r[c_dzp]) +
                         opt.descent_tol * (1.0 + std::abs(r[c_phi]));
      if (!(r[c_dphi] <= rhs)) ++bad;
    }
    o.detail = "checked " + std::to_string(eta_rows.size()) + " rows";
    if (bad > 0) o = {"FAIL", std::to_string(bad) + " rows violate the descent inequality; " + o.detail};
    else if (eta_rows.empty()) o = {"SKIP", "no rows with feasible eta"};
    report.emplace_back("descent-inequality", o);
  }

  std::optional<double> phi_hat;
  std::string phi_hat_reason;
  try {
    phi_hat = separable_lower_bound(p);
  } catch (const std::exception& e) {
    phi_hat_reason = e.what();
  }

  {
    Outcome o{"PASS", ""};
    if (!phi_hat) {
      o = {"SKIP", phi_hat_reason};
    } else if (eta_rows.empty()) {
      o = {"SKIP", "no rows with feasible eta"};
    } else {
      int bad = 0;
      for (int i : eta_rows) {
        if (!(tab.rows[i][c_phi] >= *phi_hat - opt.descent_tol * (1.0 + std::abs(*phi_hat)))) ++bad;
      }
      o.detail = "Phi_hat=" + fmt_num(*phi_hat) + ", checked " + std::to_string(eta_rows.size()) + " rows";
      if (bad > 0) o = {"FAIL", std::to_string(bad) + " rows below the lower bound; " + o.detail};
    }
    report.emplace_back("lower-bound", o);
  }

  {
    Outcome o{"PASS", ""};
    const Params prm = params_of(0);
    if (!constant || !eta_pair(prm, T).feasible) {
      o = {"SKIP", "needs constant parameters with feasible eta"};
    } else if (!phi_hat) {
      o = {"SKIP", phi_hat_reason};
    } else {
      std::vector<double> norms;
      for (const auto& blk : p.blocks) norms.push_back(spectral_norm(blk.A));
      const ConvergenceBounds bnd =
          convergence_bounds(tab.rows[0][c_phi], *phi_hat, tab.rows[K - 1][c_phi], K, prm, norms, T);
      int found = -1;
      for (int i = 0; i < K && found < 0; ++i) {
        bool ok = tab.rows[i][c_pi] <= bnd.pi_bound;
        for (int t = 0; t < T && ok; ++t) ok = tab.rows[i][c_delta0 + t] <= bnd.delta_bounds[t];
        if (ok) found = i + 1;
      }
      o.detail = "pi bound " + fmt_num(bnd.pi_bound) + ", K=" + std::to_string(K);
      if (found < 0) o = {"FAIL", "no row within the bounds; " + o.detail};
      else o.detail = "j=" + std::to_string(found) + ", " + o.detail;
    }
    report.emplace_back("convergence-bounds", o);
  }

  bool failed = false;
  for (const auto& [name, o] : report) {
    out << name << ": " << o.status;
    if (!o.detail.empty()) out << " (" << o.detail << ")";
    out << '\n';
    failed = failed || o.status == "FAIL";
  }
  return failed ? kCheckFailed : kOk;
}

}  // namespace proxjac::cli
