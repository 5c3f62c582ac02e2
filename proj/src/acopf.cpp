#include "proxjac/acopf.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "proxjac/builtins.hpp"

namespace proxjac {

BalanceTerms polar_balance(int i, const Vec& V, const Vec& theta, const std::vector<AdmittanceEntry>& row) {
  const Eigen::Index nb = V.size();
  if (theta.size() != nb || i < 0 || i >= nb) throw DimensionError("polar_balance: bus index or vector size");
  BalanceTerms r;
  r.dre_dV = Vec::Zero(nb);
  r.dre_dth = Vec::Zero(nb);
  r.dim_dV = Vec::Zero(nb);
  r.dim_dth = Vec::Zero(nb);
  const double Vi = V[i];
  for (const auto& e : row) {
    if (e.j < 0 || e.j >= nb) throw DimensionError("polar_balance: admittance column out of range");
    if (e.j == i) {
      r.c_re += e.re * Vi * Vi;
      r.c_im -= e.im * Vi * Vi;
      r.dre_dV[i] += 2.0 * e.re * Vi;
      r.dim_dV[i] -= 2.0 * e.im * Vi;
      continue;
    }
    const double Vj = V[e.j];
    const double d = theta[i] - theta[e.j];
    const double cs = std::cos(d);
    const double sn = std::sin(d);
    const double a = e.re * cs + e.im * sn;  // real-part kernel
    const double b = e.re * sn - e.im * cs;  // imaginary-part kernel
    r.c_re += Vi * Vj * a;
    r.c_im += Vi * Vj * b;
    // d a / d theta_i = -b, d b / d theta_i = a.
    r.dre_dV[i] += Vj * a;
    r.dre_dV[e.j] += Vi * a;
    r.dre_dth[i] -= Vi * Vj * b;
    r.dre_dth[e.j] += Vi * Vj * b;
    r.dim_dV[i] += Vj * b;
    r.dim_dV[e.j] += Vi * b;
    r.dim_dth[i] += Vi * Vj * a;
    r.dim_dth[e.j] -= Vi * Vj * a;
  }
  return r;
}

namespace {

int get_int(const Json& j, const char* key, const std::string& who) {
  if (!j.contains(key) || !j.at(key).is_number_integer()) {
    throw ProblemError(who + ": payload field \"" + key + "\" must be an integer");
  }
  return j.at(key).get<int>();
}

/// Payload:
///   bus           index i of the bus within the network
///   n_bus         bus count |B|
///   v_offset      position of V_1 inside x (V occupies n_bus slots)
///   theta_offset  position of theta_1 inside x
///   gens          positions inside x of the generator outputs injected at bus i
///   load          demand at bus i
///   Y             row i of the admittance matrix as [[j, re, im], ...]
///   neighbors     optional; must equal the off-diagonal columns of Y
class BalanceEvaluator final : public BuiltinEvaluator {
 public:
  BalanceEvaluator(bool imag, const Json& payload, int n) : imag_(imag), n_(n) {
    const std::string who = imag ? "acopf_im" : "acopf_re";
    if (!payload.is_object()) throw ProblemError(who + ": payload must be an object");
    bus_ = get_int(payload, "bus", who);
    nb_ = get_int(payload, "n_bus", who);
    voff_ = get_int(payload, "v_offset", who);
    toff_ = get_int(payload, "theta_offset", who);
    if (nb_ < 1 || bus_ < 0 || bus_ >= nb_) throw ProblemError(who + ": bus index out of range");
    if (voff_ < 0 || voff_ + nb_ > n || toff_ < 0 || toff_ + nb_ > n) {
      throw ProblemError(who + ": voltage/angle offsets exceed block dimension");
    }
    if (!payload.contains("load") || !payload.at("load").is_number()) {
      throw ProblemError(who + ": payload field \"load\" must be a number");
    }
    load_ = payload.at("load").get<double>();
    if (payload.contains("gens")) {
      for (const auto& g : payload.at("gens")) {
        const int idx = g.get<int>();
        if (idx < 0 || idx >= n) throw ProblemError(who + ": generator index out of range");
        gens_.push_back(idx);
      }
    }
    if (!payload.contains("Y") || !payload.at("Y").is_array()) throw ProblemError(who + ": payload field \"Y\" missing");
    std::vector<int> nbrs;
    for (const auto& e : payload.at("Y")) {
      if (!e.is_array() || e.size() != 3) throw ProblemError(who + ": Y entries must be [j, re, im]");
      AdmittanceEntry a{e[0].get<int>(), e[1].get<double>(), e[2].get<double>()};
      if (a.j < 0 || a.j >= nb_) throw ProblemError(who + ": Y column out of range");
      if (a.j != bus_) nbrs.push_back(a.j);
      row_.push_back(a);
    }
    if (payload.contains("neighbors")) {
      auto given = payload.at("neighbors").get<std::vector<int>>();
      std::sort(given.begin(), given.end());
      std::sort(nbrs.begin(), nbrs.end());
      if (given != nbrs) throw ProblemError(who + ": neighbors inconsistent with Y pattern");
    }
  }

  double value(const Vec& x) const override {
    const auto t = terms(x);
    double g = 0.0;
    for (int idx : gens_) g += x[idx];
    return g - load_ - (imag_ ? t.c_im : t.c_re);
  }

  Vec gradient(const Vec& x) const override {
    const auto t = terms(x);
    Vec grad = Vec::Zero(n_);
    for (int idx : gens_) grad[idx] += 1.0;
    grad.segment(voff_, nb_) -= imag_ ? t.dim_dV : t.dre_dV;
    grad.segment(toff_, nb_) -= imag_ ? t.dim_dth : t.dre_dth;
    return grad;
  }

 private:
  BalanceTerms terms(const Vec& x) const {
    if (x.size() != n_) throw DimensionError("acopf builtin: x has wrong dimension");
    return polar_balance(bus_, x.segment(voff_, nb_), x.segment(toff_, nb_), row_);
  }

  bool imag_;
  int n_;
  int bus_ = 0;
  int nb_ = 0;
  int voff_ = 0;
  int toff_ = 0;
  double load_ = 0.0;
  std::vector<int> gens_;
  std::vector<AdmittanceEntry> row_;
};

}  // namespace

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"acopf_re", "acopf_im"};
  return names;
}

std::shared_ptr<const BuiltinEvaluator> make_builtin_evaluator(const std::string& name, const Json& payload,
                                                              int n) {
  if (name == "acopf_re") return std::make_shared<BalanceEvaluator>(false, payload, n);
  if (name == "acopf_im") return std::make_shared<BalanceEvaluator>(true, payload, n);
  throw ProblemError("unknown builtin \"" + name + "\"");
}

}  // namespace proxjac
