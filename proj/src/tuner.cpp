#include "proxjac/tuner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace proxjac {

TunerConfig TunerConfig::large_problem() {
  TunerConfig c;
  c.rho0 = 1e-5;
  c.kappa_x = 2.5;
  return c;
}

void validate_tuner_config(const TunerConfig& c) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("tuner config: ") + what);
  };
  need(c.eps > 0.0 && c.eps < 1.0, "eps must lie in (0, 1)");
  need(c.rho0 > 0.0, "rho0 must be > 0");
  need(c.omega > 0.0, "omega must be > 0");
  need(c.kappa_x > 0.0, "kappa_x must be > 0");
  need(c.kappa_z > 0.0, "kappa_z must be > 0");
  need(c.zeta > 0.0, "zeta must be > 0");
  need(c.psi_cap > 0, "psi_cap must be > 0");
  need(c.nu_x > 1.0, "nu_x must be > 1");
  need(c.nu_rho > 1.0, "nu_rho must be > 1");
  need(c.nu_theta > 1.0, "nu_theta must be > 1");
  need(c.chi > 1.0, "chi must be > 1");
  need(c.max_iters >= 1, "max_iters must be >= 1");
}

TunerState init_params(const TunerConfig& cfg) {
  validate_tuner_config(cfg);
  TunerState s;
  s.params.theta = 1.0 / (cfg.eps * cfg.eps);
  s.params.rho = cfg.rho0;
  s.params.tau_x = cfg.kappa_x * cfg.rho0;
  s.params.tau_z = cfg.kappa_z * cfg.rho0;
  s.psi = 0;
  return s;
}

StopDecision tune_step(TunerState& s, const TraceRecord& m, int T, const TunerConfig& cfg) {
  Params& P = s.params;
  if (m.dphi > cfg.zeta * std::abs(m.phi)) {
    P.tau_x = std::min(cfg.nu_x * P.tau_x, (2.0 * T - 1.0) * P.rho);
  }
  if (std::max(m.p_inf, m.d_inf) <= cfg.eps && m.coupling_inf > cfg.eps) {
    P.theta *= cfg.nu_theta;
  }
  if (m.p_inf > cfg.chi * m.d_inf && P.rho < cfg.omega * P.theta) {
    P.rho = std::min(cfg.nu_rho * P.rho, cfg.omega * P.theta);
    P.tau_x = cfg.kappa_x * P.rho;
    P.tau_z = cfg.kappa_z * P.rho;
  } else if (m.d_inf > cfg.chi * m.p_inf && s.psi < cfg.psi_cap) {
    P.rho /= cfg.nu_rho;
    P.tau_x = cfg.kappa_x * P.rho;
    P.tau_z = cfg.kappa_z * P.rho;
    ++s.psi;
  }
  s.k = m.k;
  s.last_phi = m.phi;
  s.has_last_phi = true;
  return StopDecision{m.coupling_inf <= cfg.eps};
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::FeasibleStop:
      return "feasible-stop";
    case Termination::IterationCap:
      return "iteration-cap";
    case Termination::BlockFailure:
      return "block-failure";
  }
  return "unknown";
}

AdaptiveResult run_adaptive(const Problem& p, const TunerConfig& cfg, const InitialPoint& init,
                            const RunConfig& config) {
  AdaptiveResult res;
  res.tuner = init_params(cfg);
  res.state = make_runner_state(p, init.x0, init.z0, init.lambda0, res.tuner.params);
  WorkerPool pool(config.workers);
  for (int k = 1; k <= cfg.max_iters; ++k) {
    TraceRecord rec;
    try {
      rec = iterate(p, res.state, res.tuner.params, config, pool);
    } catch (const BlockFailure& e) {
      res.termination = Termination::BlockFailure;
      res.failed_block = e.block();
      res.message = e.what();
      return res;
    }
    if (config.sink) config.sink(rec);
    res.trace.push_back(rec);
    if (tune_step(res.tuner, rec, p.T(), cfg).stop) {
      res.termination = Termination::FeasibleStop;
      return res;
    }
  }
  res.termination = Termination::IterationCap;
  return res;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v, const std::string& key, int line) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) {
    throw std::invalid_argument("config line " + std::to_string(line) + ": bad number for " + key);
  }
  return d;
}

int to_int(const std::string& v, const std::string& key, int line) {
  const double d = to_double(v, key, line);
  if (d != std::floor(d)) throw std::invalid_argument("config line " + std::to_string(line) + ": " + key + " must be an integer");
  return static_cast<int>(d);
}

}  // namespace

TunerConfig parse_tuner_config(const std::string& text, TunerConfig c) {
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(line) + ": expected key = value");
    const std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    if (val.size() >= 2 && val.front() == '"' && val.back() == '"') val = val.substr(1, val.size() - 2);
    if (key == "eps") c.eps = to_double(val, key, line);
    else if (key == "rho0") c.rho0 = to_double(val, key, line);
    else if (key == "omega") c.omega = to_double(val, key, line);
    else if (key == "kappa_x") c.kappa_x = to_double(val, key, line);
    else if (key == "kappa_z") c.kappa_z = to_double(val, key, line);
    else if (key == "zeta") c.zeta = to_double(val, key, line);
    else if (key == "psi_cap" || key == "Psi") c.psi_cap = to_int(val, key, line);
    else if (key == "nu_x") c.nu_x = to_double(val, key, line);
    else if (key == "nu_rho") c.nu_rho = to_double(val, key, line);
    else if (key == "nu_theta") c.nu_theta = to_double(val, key, line);
    else if (key == "chi") c.chi = to_double(val, key, line);
    else if (key == "max_iters") c.max_iters = to_int(val, key, line);
    else throw std::invalid_argument("config line " + std::to_string(line) + ": unknown key \"" + key + "\"");
  }
  return c;
}

TunerConfig load_tuner_config(const std::string& path, TunerConfig base) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_tuner_config(ss.str(), base);
}

}  // namespace proxjac
