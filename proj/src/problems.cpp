#include "proxjac/problems.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Eigenvalues>

namespace proxjac {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Trip = Eigen::Triplet<double>;

SpMat diag_sparse(const Vec& d) {
  std::vector<Trip> trips;
  for (int i = 0; i < d.size(); ++i) {
    if (d[i] != 0.0) trips.emplace_back(i, i, d[i]);
  }
  return sparse_from_triplets(static_cast<int>(d.size()), static_cast<int>(d.size()), trips);
}

double num(const Json& j, const char* key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}

double req_num(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw ProblemError("network schema: missing numeric field \"" + std::string(key) + "\" at " + where);
  }
  return j.at(key).get<double>();
}

/// Ramp rows: row (g, t) links period t to t + 1.
void add_ramp_coupling(std::vector<std::vector<Trip>>& trips, int G, int T, const std::vector<int>& p_idx,
                       const std::vector<int>& s_idx) {
  for (int t = 0; t + 1 < T; ++t) {
    for (int g = 0; g < G; ++g) {
      const int row = t * G + g;
      trips[t].emplace_back(row, p_idx[g], -1.0);
      trips[t + 1].emplace_back(row, p_idx[g], 1.0);
      trips[t + 1].emplace_back(row, s_idx[g], 1.0);
    }
  }
}

}  // namespace

std::vector<int> NetworkData::gens_at(int bus) const {
  std::vector<int> out;
  for (std::size_t g = 0; g < generators.size(); ++g) {
    if (generators[g].bus == bus) out.push_back(static_cast<int>(g));
  }
  return out;
}

NetworkData network_from_json(const Json& j) {
  NetworkData net;
  if (!j.is_object()) throw ProblemError("network schema: document must be an object");
  if (j.contains("Y")) {
    net.n_bus = j.at("n_bus").get<int>();
    net.Y.assign(net.n_bus, {});
    for (const auto& e : j.at("Y")) {
      const int i = e.at(0).get<int>();
      if (i < 0 || i >= net.n_bus) throw ProblemError("network schema: Y row out of range");
      net.Y[i].push_back({e.at(1).get<int>(), e.at(2).get<double>(), e.at(3).get<double>()});
    }
    net.vmin = j.at("vmin").get<std::vector<double>>();
    net.vmax = j.at("vmax").get<std::vector<double>>();
  } else {
    if (!j.contains("buses")) throw ProblemError("network schema: missing required field \"buses\"");
    const auto& buses = j.at("buses");
    net.n_bus = static_cast<int>(buses.size());
    std::vector<std::vector<std::complex<double>>> Y(net.n_bus, std::vector<std::complex<double>>(net.n_bus));
    for (int i = 0; i < net.n_bus; ++i) {
      const auto& b = buses[i];
      const std::string where = "buses[" + std::to_string(i) + "]";
      net.vmin.push_back(req_num(b, "vmin", where));
      net.vmax.push_back(req_num(b, "vmax", where));
      Y[i][i] += std::complex<double>(num(b, "shunt_g", 0.0), num(b, "shunt_b", 0.0));
    }
    if (j.contains("lines")) {
      int li = 0;
      for (const auto& l : j.at("lines")) {
        const std::string where = "lines[" + std::to_string(li++) + "]";
        const int f = static_cast<int>(req_num(l, "from", where));
        const int t = static_cast<int>(req_num(l, "to", where));
        if (f < 0 || t < 0 || f >= net.n_bus || t >= net.n_bus || f == t) {
          throw ProblemError("network schema: bad endpoints at " + where);
        }
        const std::complex<double> y = 1.0 / std::complex<double>(req_num(l, "r", where), req_num(l, "x", where));
        const std::complex<double> half_b(0.0, 0.5 * num(l, "b", 0.0));
        Y[f][t] -= y;
        Y[t][f] -= y;
        Y[f][f] += y + half_b;
        Y[t][t] += y + half_b;
      }
    }
    net.Y.assign(net.n_bus, {});
    for (int i = 0; i < net.n_bus; ++i) {
      for (int k = 0; k < net.n_bus; ++k) {
        if (k == i || Y[i][k] != std::complex<double>(0.0, 0.0)) net.Y[i].push_back({k, Y[i][k].real(), Y[i][k].imag()});
      }
    }
  }
  net.neighbors.assign(net.n_bus, {});
  for (int i = 0; i < net.n_bus; ++i) {
    for (const auto& e : net.Y[i]) {
      if (e.j != i) net.neighbors[i].push_back(e.j);
    }
  }
  if (j.contains("generators")) {
    int gi = 0;
    for (const auto& g : j.at("generators")) {
      const std::string where = "generators[" + std::to_string(gi++) + "]";
      Generator gen;
      gen.bus = static_cast<int>(req_num(g, "bus", where));
      if (gen.bus < 0 || gen.bus >= net.n_bus) throw ProblemError("network schema: generator bus out of range at " + where);
      gen.pmin = req_num(g, "pmin", where);
      gen.pmax = req_num(g, "pmax", where);
      gen.qmin = req_num(g, "qmin", where);
      gen.qmax = req_num(g, "qmax", where);
      gen.c2 = num(g, "c2", 0.0);
      gen.c1 = num(g, "c1", 0.0);
      gen.ramp = req_num(g, "ramp", where);
      net.generators.push_back(gen);
    }
  }
  net.load_p = j.at("load_p").get<std::vector<std::vector<double>>>();
  net.load_q = j.at("load_q").get<std::vector<std::vector<double>>>();
  for (const auto* L : {&net.load_p, &net.load_q}) {
    for (const auto& row : *L) {
      if (static_cast<int>(row.size()) != net.n_bus) throw ProblemError("network schema: load rows must have one entry per bus");
    }
  }
  if (net.load_p.size() != net.load_q.size()) throw ProblemError("network schema: load_p and load_q period counts differ");
  net.delta_t = num(j, "delta_t", 1.0);
  net.objective_scale = num(j, "objective_scale", 1.0);
  return net;
}

Json network_to_json(const NetworkData& net) {
  Json y = Json::array();
  for (int i = 0; i < net.n_bus; ++i) {
    for (const auto& e : net.Y[i]) y.push_back(Json::array({i, e.j, e.re, e.im}));
  }
  Json gens = Json::array();
  for (const auto& g : net.generators) {
    gens.push_back({{"bus", g.bus}, {"pmin", g.pmin}, {"pmax", g.pmax}, {"qmin", g.qmin}, {"qmax", g.qmax},
                    {"c2", g.c2}, {"c1", g.c1}, {"ramp", g.ramp}});
  }
  return Json{{"n_bus", net.n_bus}, {"Y", y},           {"vmin", net.vmin},        {"vmax", net.vmax},
              {"generators", gens}, {"load_p", net.load_p}, {"load_q", net.load_q}, {"delta_t", net.delta_t},
              {"objective_scale", net.objective_scale}};
}

NetworkData toy_network(int buses, int periods, std::uint64_t seed) {
  if (buses < 1 || periods < 1) throw std::invalid_argument("toy_network: buses and periods must be >= 1");
  Json doc;
  doc["buses"] = Json::array();
  for (int i = 0; i < buses; ++i) doc["buses"].push_back({{"vmin", 0.9}, {"vmax", 1.1}});
  doc["lines"] = Json::array();
  for (int i = 0; i + 1 < buses; ++i) doc["lines"].push_back({{"from", i}, {"to", i + 1}, {"r", 0.01}, {"x", 0.1}, {"b", 0.02}});
  doc["generators"] = Json::array();
  doc["generators"].push_back(
      {{"bus", 0}, {"pmin", 0.0}, {"pmax", 2.0}, {"qmin", -1.5}, {"qmax", 1.5}, {"c2", 0.5}, {"c1", 1.0}, {"ramp", 0.1}});
  doc["generators"].push_back({{"bus", buses - 1},
                               {"pmin", 0.0},
                               {"pmax", 2.0},
                               {"qmin", -1.5},
                               {"qmax", 1.5},
                               {"c2", 2.0},
                               {"c1", 4.0},
                               {"ramp", 1.0}});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  const int load_buses = buses > 1 ? buses - 1 : 1;
  doc["load_p"] = Json::array();
  doc["load_q"] = Json::array();
  for (int t = 0; t < periods; ++t) {
    std::vector<double> lp(buses, 0.0), lq(buses, 0.0);
    const double shape = 1.0 + 0.35 * std::sin(2.0 * std::numbers::pi * (t - 6) / 24.0);
    for (int i = (buses > 1 ? 1 : 0); i < buses; ++i) {
      lp[i] = (1.0 / load_buses) * shape * (1.0 + 0.02 * noise(rng));
      lq[i] = 0.3 * lp[i];
    }
    doc["load_p"].push_back(lp);
    doc["load_q"].push_back(lq);
  }
  return network_from_json(doc);
}

BalancePair acopf_balance(int bus, const Vec& V, const Vec& theta, const NetworkData& net) {
  if (bus < 0 || bus >= net.n_bus) throw std::out_of_range("acopf_balance: bus out of range");
  BalancePair out;
  out.terms = polar_balance(bus, V, theta, net.Y[bus]);
  out.c_re = out.terms.c_re;
  out.c_im = out.terms.c_im;
  return out;
}

Problem gen_acopf_toy(const NetworkData& net, int T) {
  if (net.n_bus > 5 || T > 24) throw std::length_error("gen_acopf_toy: size cap exceeded (|B| <= 5, T <= 24)");
  if (T < 1 || net.n_bus < 1) throw std::invalid_argument("gen_acopf_toy: need T >= 1 and at least one bus");
  if (static_cast<int>(net.load_p.size()) < T) throw std::invalid_argument("gen_acopf_toy: load profile shorter than T");
  const int G = static_cast<int>(net.generators.size());
  const int B = net.n_bus;
  const AcopfLayout L{G, B};
  const int n = L.n();

  Problem p;
  p.m = G * (T - 1);
  p.b = Vec::Zero(p.m);
  for (int t = 0; t + 1 < T; ++t) {
    for (int g = 0; g < G; ++g) p.b[t * G + g] = net.generators[g].ramp * net.delta_t;
  }
  std::vector<std::vector<Trip>> trips(T);
  std::vector<int> p_idx(G), s_idx(G);
  for (int g = 0; g < G; ++g) {
    p_idx[g] = L.p(g);
    s_idx[g] = L.s(g);
  }
  add_ramp_coupling(trips, G, T, p_idx, s_idx);

  for (int t = 0; t < T; ++t) {
    BlockSpec blk;
    blk.n = n;
    Vec qd = Vec::Zero(n), c = Vec::Zero(n);
    for (int g = 0; g < G; ++g) {
      qd[L.p(g)] = 2.0 * net.generators[g].c2 * net.objective_scale;
      c[L.p(g)] = net.generators[g].c1 * net.objective_scale;
    }
    blk.objective = SmoothFunction::quadratic(diag_sparse(qd), c, 0.0);
    blk.set.lower = Vec::Zero(n);
    blk.set.upper = Vec::Zero(n);
    for (int g = 0; g < G; ++g) {
      const auto& gen = net.generators[g];
      blk.set.lower[L.p(g)] = gen.pmin;
      blk.set.upper[L.p(g)] = gen.pmax;
      blk.set.lower[L.q(g)] = gen.qmin;
      blk.set.upper[L.q(g)] = gen.qmax;
      blk.set.lower[L.s(g)] = 0.0;
      blk.set.upper[L.s(g)] = t == 0 ? 0.0 : 2.0 * gen.ramp * net.delta_t;
    }
    for (int i = 0; i < B; ++i) {
      blk.set.lower[L.v(i)] = net.vmin[i];
      blk.set.upper[L.v(i)] = net.vmax[i];
      blk.set.lower[L.th(i)] = i == 0 ? 0.0 : -std::numbers::pi / 2;
      blk.set.upper[L.th(i)] = i == 0 ? 0.0 : std::numbers::pi / 2;
    }
    for (int i = 0; i < B; ++i) {
      Json yrow = Json::array();
      for (const auto& e : net.Y[i]) yrow.push_back(Json::array({e.j, e.re, e.im}));
      std::vector<int> pg, qg;
      for (int g : net.gens_at(i)) {
        pg.push_back(L.p(g));
        qg.push_back(L.q(g));
      }
      Json base{{"bus", i}, {"n_bus", B}, {"v_offset", L.v(0)}, {"theta_offset", L.th(0)}, {"Y", yrow},
                {"neighbors", net.neighbors[i]}};
      Json re = base, im = base;
      re["gens"] = pg;
      re["load"] = net.load_p[t][i];
      im["gens"] = qg;
      im["load"] = net.load_q[t][i];
      blk.set.equalities.push_back(SmoothFunction::builtin("acopf_re", re, n));
      blk.set.equalities.push_back(SmoothFunction::builtin("acopf_im", im, n));
    }
    blk.A = sparse_from_triplets(p.m, n, trips[t]);
    p.blocks.push_back(std::move(blk));
  }
  p.metadata = Json{{"generator", "acopf-toy"}, {"n_bus", B}, {"periods", T}, {"objective_scale", net.objective_scale}};
  return p;
}

double acopf_balance_residual(const Problem& p, const NetworkData& net, const BlockVecs& x) {
  const AcopfLayout L{static_cast<int>(net.generators.size()), net.n_bus};
  double worst = 0.0;
  for (int t = 0; t < p.T(); ++t) {
    const Vec V = x[t].segment(L.v(0), net.n_bus);
    const Vec th = x[t].segment(L.th(0), net.n_bus);
    for (int i = 0; i < net.n_bus; ++i) {
      const auto bal = acopf_balance(i, V, th, net);
      double pg = 0.0, qg = 0.0;
      for (int g : net.gens_at(i)) {
        pg += x[t][L.p(g)];
        qg += x[t][L.q(g)];
      }
      worst = std::max(worst, std::abs(pg - net.load_p[t][i] - bal.c_re));
      worst = std::max(worst, std::abs(qg - net.load_q[t][i] - bal.c_im));
    }
  }
  return worst;
}

Problem gen_multiperiod_dispatch(int T, const std::vector<Generator>& generators, double ramp_frac,
                                 const std::vector<double>& profile, double delta_t) {
  if (T < 2) throw std::invalid_argument("gen_multiperiod_dispatch: T must be >= 2");
  if (!(ramp_frac > 0.0) || !std::isfinite(ramp_frac)) {
    throw std::invalid_argument("gen_multiperiod_dispatch: invalid ramp fraction");
  }
  if (static_cast<int>(profile.size()) < T) throw std::invalid_argument("gen_multiperiod_dispatch: profile shorter than T");
  if (generators.empty()) throw std::invalid_argument("gen_multiperiod_dispatch: no generators");
  const int G = static_cast<int>(generators.size());
  const int n = 2 * G;
  Problem p;
  p.m = G * (T - 1);
  p.b = Vec::Zero(p.m);
  std::vector<double> rdelta(G);
  for (int g = 0; g < G; ++g) rdelta[g] = ramp_frac * generators[g].pmax * delta_t;
  for (int t = 0; t + 1 < T; ++t) {
    for (int g = 0; g < G; ++g) p.b[t * G + g] = rdelta[g];
  }
  std::vector<std::vector<Trip>> trips(T);
  std::vector<int> p_idx(G), s_idx(G);
  for (int g = 0; g < G; ++g) {
    p_idx[g] = g;
    s_idx[g] = G + g;
  }
  add_ramp_coupling(trips, G, T, p_idx, s_idx);
  for (int t = 0; t < T; ++t) {
    BlockSpec blk;
    blk.n = n;
    Vec qd = Vec::Zero(n), c = Vec::Zero(n);
    blk.set.lower = Vec::Zero(n);
    blk.set.upper = Vec::Zero(n);
    Vec demand = Vec::Zero(n);
    for (int g = 0; g < G; ++g) {
      qd[g] = 2.0 * generators[g].c2;
      c[g] = generators[g].c1;
      blk.set.lower[g] = generators[g].pmin;
      blk.set.upper[g] = generators[g].pmax;
      blk.set.upper[G + g] = t == 0 ? 0.0 : 2.0 * rdelta[g];
      demand[g] = 1.0;
    }
    blk.objective = SmoothFunction::quadratic(diag_sparse(qd), c, 0.0);
    blk.set.equalities.push_back(SmoothFunction::affine(demand, -profile[t]));
    blk.A = sparse_from_triplets(p.m, n, trips[t]);
    p.blocks.push_back(std::move(blk));
  }
  p.metadata = Json{{"generator", "dispatch"}, {"periods", T}, {"ramp_frac", ramp_frac}};
  return p;
}

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::KktLinearSolve:
      return "kkt-linear-solve";
    case Provenance::GridSearch:
      return "grid-search";
    case Provenance::ClosedForm:
      return "closed-form";
  }
  return "unknown";
}

namespace {
constexpr double kMaxCouplingCondition = 100.0;
}  // namespace

std::pair<Problem, OracleSolution> gen_coupled_qp(std::uint64_t seed, int T, int n_t, int m) {
  if (T < 1 || n_t < 1 || m < 1) throw std::invalid_argument("gen_coupled_qp: T, n_t, m must be >= 1");
  if (m > T * n_t) throw std::invalid_argument("gen_coupled_qp: m exceeds total dimension");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N01(0.0, 1.0);
  auto gauss = [&](int r, int c) {
    DenseMat M(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) M(i, j) = N01(rng);
    }
    return M;
  };
  Problem p;
  p.m = m;
  for (int t = 0; t < T; ++t) {
    const DenseMat M = gauss(n_t, n_t);
    const DenseMat Q = M * M.transpose() + DenseMat::Identity(n_t, n_t);
    const Vec c = gauss(n_t, 1).col(0);
    BlockSpec blk;
    blk.n = n_t;
    blk.objective = SmoothFunction::quadratic(Q.sparseView(), c, 0.0);
    blk.set.lower = Vec::Constant(n_t, -kInf);
    blk.set.upper = Vec::Constant(n_t, kInf);
    p.blocks.push_back(std::move(blk));
  }
  int attempt = 0;
  for (;; ++attempt) {
    if (attempt >= 100) throw std::runtime_error("gen_coupled_qp: rank rejection exceeded 100 attempts");
    for (auto& blk : p.blocks) blk.A = SpMat(gauss(m, n_t).sparseView());
    if (coupling_rank(p) < m) continue;
    const Eigen::JacobiSVD<DenseMat> svd(stacked_coupling(p));
    const Vec sv = svd.singularValues();
    if (sv[m - 1] * kMaxCouplingCondition >= sv[0]) break;
  }
  p.b = gauss(m, 1).col(0);
  p.metadata = Json{{"generator", "coupled-qp"}, {"seed", seed}, {"T", T}, {"n_t", n_t}, {"m", m}};
  OracleSolution o = kkt_reference_solve(p);
  return {std::move(p), std::move(o)};
}

namespace {

struct Affine {
  Vec a;
  double c0;
};

Affine as_affine(const SmoothFunction& f, int t) {
  if (!f.is_quadratic() || f.as_quadratic().Q.nonZeros() != 0) {
    throw ProblemError("kkt_reference_solve: block " + std::to_string(t) + " has a non-affine equality");
  }
  return {f.as_quadratic().c, f.as_quadratic().c0};
}

}  // namespace

OracleSolution kkt_reference_solve(const Problem& p) {
  const int T = p.T();
  std::vector<std::vector<int>> col(T);  // global column of each free coordinate, -1 if fixed
  int nf = 0, neq = 0;
  for (int t = 0; t < T; ++t) {
    const auto& blk = p.blocks[t];
    if (!blk.objective.is_quadratic()) throw ProblemError("kkt_reference_solve: block " + std::to_string(t) + " is not quadratic");
    col[t].assign(blk.n, -1);
    for (int i = 0; i < blk.n; ++i) {
      if (!(blk.set.lower[i] == blk.set.upper[i])) col[t][i] = nf++;
    }
    neq += static_cast<int>(blk.set.equalities.size());
  }
  const int N = nf + p.m + neq;
  DenseMat K = DenseMat::Zero(N, N);
  Vec rhs = Vec::Zero(N);
  int eq_row = nf + p.m;
  for (int t = 0; t < T; ++t) {
    const auto& blk = p.blocks[t];
    const DenseMat Q(blk.objective.as_quadratic().Q);
    const Vec& c = blk.objective.as_quadratic().c;
    const DenseMat A(blk.A);
    Vec xfix = Vec::Zero(blk.n);
    for (int i = 0; i < blk.n; ++i) {
      if (col[t][i] < 0) xfix[i] = blk.set.lower[i];
    }
    for (int i = 0; i < blk.n; ++i) {
      const int r = col[t][i];
      if (r < 0) continue;
      for (int j = 0; j < blk.n; ++j) {
        if (col[t][j] >= 0) K(r, col[t][j]) = Q(i, j);
      }
      rhs[r] = -c[i] - Q.row(i).dot(xfix);
      for (int k = 0; k < p.m; ++k) {
        K(r, nf + k) = A(k, i);
        K(nf + k, r) = A(k, i);
      }
    }
    rhs.segment(nf, p.m) -= A * xfix;
    for (std::size_t e = 0; e < blk.set.equalities.size(); ++e, ++eq_row) {
      const Affine af = as_affine(blk.set.equalities[e], t);
      for (int i = 0; i < blk.n; ++i) {
        if (col[t][i] < 0) continue;
        K(col[t][i], eq_row) = af.a[i];
        K(eq_row, col[t][i]) = af.a[i];
      }
      rhs[eq_row] = -af.c0 - af.a.dot(xfix);
    }
  }
  rhs.segment(nf, p.m) += p.b;

  Eigen::FullPivLU<DenseMat> lu(K);
  lu.setThreshold(1e-12);
  if (lu.rank() < N) throw std::runtime_error("kkt_reference_solve: singular KKT matrix");
  Vec sol = lu.solve(rhs);
  for (int pass = 0; pass < 2; ++pass) sol += lu.solve(rhs - K * sol);

  OracleSolution o;
  o.provenance = Provenance::KktLinearSolve;
  o.lambda_star = sol.segment(nf, p.m);
  eq_row = nf + p.m;
  for (int t = 0; t < T; ++t) {
    const auto& blk = p.blocks[t];
    Vec x(blk.n);
    for (int i = 0; i < blk.n; ++i) {
      if (col[t][i] < 0) {
        x[i] = blk.set.lower[i];
        continue;
      }
      x[i] = sol[col[t][i]];
      if (x[i] <= blk.set.lower[i] + 1e-10 || x[i] >= blk.set.upper[i] - 1e-10) {
        throw std::runtime_error("kkt_reference_solve: active bound at block " + std::to_string(t) + " coordinate " +
                                 std::to_string(i));
      }
    }
    const int r = static_cast<int>(blk.set.equalities.size());
    o.mu_star.push_back(sol.segment(eq_row, r));
    eq_row += r;
    o.objective += blk.objective.value(x);
    o.x_star.push_back(std::move(x));
  }
  return o;
}

PenaltyReference penalty_reference_solve(const Problem& p, double theta) {
  if (!(theta > 0.0)) throw std::invalid_argument("penalty_reference_solve: theta must be > 0");
  int n = 0;
  for (int t = 0; t < p.T(); ++t) {
    const auto& blk = p.blocks[t];
    if (!blk.objective.is_quadratic() || blk.set.has_finite_bounds() || blk.set.has_equalities()) {
      throw ProblemError("penalty_reference_solve: block " + std::to_string(t) + " is not an unconstrained quadratic");
    }
    n += blk.n;
  }
  DenseMat K = DenseMat::Zero(n + p.m, n + p.m);
  Vec rhs = Vec::Zero(n + p.m);
  int off = 0;
  for (const auto& blk : p.blocks) {
    const DenseMat A(blk.A);
    K.block(off, off, blk.n, blk.n) = DenseMat(blk.objective.as_quadratic().Q);
    K.block(off, n, blk.n, p.m) = A.transpose();
    K.block(n, off, p.m, blk.n) = A;
    rhs.segment(off, blk.n) = -blk.objective.as_quadratic().c;
    off += blk.n;
  }
  K.block(n, n, p.m, p.m) = -DenseMat::Identity(p.m, p.m) / theta;
  rhs.segment(n, p.m) = p.b;
  const Vec sol = K.fullPivLu().solve(rhs);
  PenaltyReference ref;
  off = 0;
  for (const auto& blk : p.blocks) {
    ref.x.push_back(sol.segment(off, blk.n));
    off += blk.n;
  }
  ref.lambda = sol.segment(n, p.m);
  ref.z = -ref.lambda / theta;
  return ref;
}

namespace {

[[noreturn]] void unavailable(int t, const std::string& why) {
  throw ProblemError("lower bound unavailable: block " + std::to_string(t) + " " + why);
}

double block_min_diagonal(const DenseMat& Q, const Vec& c, double c0, const Vec& lo, const Vec& hi, int t) {
  double total = c0;
  for (int i = 0; i < c.size(); ++i) {
    const double q = Q(i, i);
    const double ci = c[i];
    auto f = [&](double x) { return 0.5 * q * x * x + ci * x; };
    if (q > 0.0) {
      total += f(std::clamp(-ci / q, lo[i], hi[i]));
    } else if (q == 0.0) {
      if (ci > 0.0) {
        if (!std::isfinite(lo[i])) unavailable(t, "is unbounded below");
        total += f(lo[i]);
      } else if (ci < 0.0) {
        if (!std::isfinite(hi[i])) unavailable(t, "is unbounded below");
        total += f(hi[i]);
      }
    } else {
      if (!std::isfinite(lo[i]) || !std::isfinite(hi[i])) unavailable(t, "is unbounded below");
      total += std::min(f(lo[i]), f(hi[i]));
    }
  }
  return total;
}

/// Convex quadratic over a box in dimension <= 3: minimum over every face.
double block_min_enumerate(const DenseMat& Q, const Vec& c, double c0, const Vec& lo, const Vec& hi, int t) {
  const int n = static_cast<int>(c.size());
  int combos = 1;
  for (int i = 0; i < n; ++i) combos *= 3;
  double best = std::numeric_limits<double>::infinity();
  for (int code = 0; code < combos; ++code) {
    Vec x = Vec::Zero(n);
    std::vector<int> fr;
    int rem = code;
    bool skip = false;
    for (int i = 0; i < n; ++i) {
      const int s = rem % 3;
      rem /= 3;
      if (s == 0) {
        fr.push_back(i);
      } else {
        const double v = s == 1 ? lo[i] : hi[i];
        if (!std::isfinite(v)) skip = true;
        x[i] = v;
      }
    }
    if (skip) continue;
    if (!fr.empty()) {
      const int k = static_cast<int>(fr.size());
      DenseMat Qf(k, k);
      Vec rf(k);
      for (int a = 0; a < k; ++a) {
        rf[a] = -c[fr[a]] - Q.row(fr[a]).dot(x);
        for (int b = 0; b < k; ++b) Qf(a, b) = Q(fr[a], fr[b]);
      }
      const auto cod = Qf.completeOrthogonalDecomposition();
      const Vec xf = cod.solve(rf);
      if ((Qf * xf - rf).norm() > 1e-9 * (1.0 + rf.norm())) continue;  // face unbounded or empty stationary set
      for (int a = 0; a < k; ++a) x[fr[a]] = xf[a];
    }
    bool feasible = true;
    for (int i = 0; i < n; ++i) feasible = feasible && x[i] >= lo[i] - 1e-12 && x[i] <= hi[i] + 1e-12;
    if (!feasible) continue;
    best = std::min(best, 0.5 * x.dot(Q * x) + c.dot(x) + c0);
  }
  if (!std::isfinite(best)) unavailable(t, "has no bounded minimizer");
  return best;
}

}  // namespace

double separable_lower_bound(const Problem& p) {
  double total = 0.0;
  for (int t = 0; t < p.T(); ++t) {
    const auto& blk = p.blocks[t];
    if (!blk.objective.is_quadratic()) unavailable(t, "has a non-quadratic objective");
    if (blk.set.has_equalities()) unavailable(t, "has equality constraints");
    const auto& q = blk.objective.as_quadratic();
    const DenseMat Q(q.Q);
    const Vec& lo = blk.set.lower;
    const Vec& hi = blk.set.upper;
    const bool diagonal = (Q - DenseMat(Q.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0 || blk.n == 1;
    if (diagonal) {
      total += block_min_diagonal(Q, q.c, q.c0, lo, hi, t);
      continue;
    }
    if (!blk.set.has_finite_bounds()) {
      Eigen::LLT<DenseMat> llt(Q);
      if (llt.info() != Eigen::Success) unavailable(t, "is not strictly convex");
      const Vec x = llt.solve(-q.c);
      total += 0.5 * x.dot(Q * x) + q.c.dot(x) + q.c0;
      continue;
    }
    if (blk.n > 3) unavailable(t, "is a coupled box QP with n > 3");
    Eigen::SelfAdjointEigenSolver<DenseMat> es(Q, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff())) {
      unavailable(t, "is nonconvex");
    }
    total += block_min_enumerate(Q, q.c, q.c0, lo, hi, t);
  }
  return total;
}

Json oracle_to_json(const OracleSolution& o) {
  Json xs = Json::array();
  for (const auto& x : o.x_star) xs.push_back(std::vector<double>(x.data(), x.data() + x.size()));
  return Json{{"provenance", to_string(o.provenance)},
              {"objective", o.objective},
              {"x_star", xs},
              {"lambda_star", std::vector<double>(o.lambda_star.data(), o.lambda_star.data() + o.lambda_star.size())}};
}

}  // namespace proxjac
