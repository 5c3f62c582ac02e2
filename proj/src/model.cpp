#include "proxjac/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "proxjac/builtins.hpp"

namespace proxjac {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRankDropTol = 1e-10;

}  // namespace

SmoothFunction::SmoothFunction(QuadraticFunction q, int n) : kind_(std::move(q)), n_(n) {}

SmoothFunction::SmoothFunction(BuiltinFunction b, int n) : kind_(std::move(b)), n_(n) {}

SmoothFunction SmoothFunction::quadratic(const SpMat& Q, Vec c, double c0) {
  const int n = static_cast<int>(c.size());
  if (Q.rows() != n || Q.cols() != n) {
    throw DimensionError("quadratic: Q must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  SpMat Qt = Q.transpose();
  SpMat sym = 0.5 * (Q + Qt);
  sym.prune(0.0);
  sym.makeCompressed();
  return SmoothFunction(QuadraticFunction{std::move(sym), std::move(c), c0}, n);
}

SmoothFunction SmoothFunction::affine(Vec a, double c0) {
  const int n = static_cast<int>(a.size());
  SpMat Q(n, n);
  Q.makeCompressed();
  return SmoothFunction(QuadraticFunction{std::move(Q), std::move(a), c0}, n);
}

SmoothFunction SmoothFunction::builtin(std::string name, Json payload, int n) {
  auto impl = make_builtin_evaluator(name, payload, n);
  return SmoothFunction(BuiltinFunction{std::move(name), std::move(payload), std::move(impl)}, n);
}

double SmoothFunction::value(const Vec& x) const {
  if (x.size() != n_) throw DimensionError("SmoothFunction::value: dimension mismatch");
  if (const auto* q = std::get_if<QuadraticFunction>(&kind_)) {
    return 0.5 * x.dot(q->Q * x) + q->c.dot(x) + q->c0;
  }
  return std::get<BuiltinFunction>(kind_).impl->value(x);
}

Vec SmoothFunction::gradient(const Vec& x) const {
  if (x.size() != n_) throw DimensionError("SmoothFunction::gradient: dimension mismatch");
  if (const auto* q = std::get_if<QuadraticFunction>(&kind_)) {
    return q->Q * x + q->c;
  }
  return std::get<BuiltinFunction>(kind_).impl->gradient(x);
}

bool ConstraintSet::has_finite_bounds() const {
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (std::isfinite(lower[i]) || std::isfinite(upper[i])) return true;
  }
  return false;
}

bool ConstraintSet::all_bounds_finite() const {
  return lower.allFinite() && upper.allFinite();
}

int Problem::total_dim() const {
  int n = 0;
  for (const auto& blk : blocks) n += blk.n;
  return n;
}

SpMat sparse_from_triplets(int rows, int cols,
                           const std::vector<Eigen::Triplet<double>>& triplets) {
  SpMat M(rows, cols);
  // setFromTriplets sums duplicates.
  M.setFromTriplets(triplets.begin(), triplets.end());
  M.prune(0.0);
  M.makeCompressed();
  return M;
}

DenseMat stacked_coupling(const Problem& p) {
  DenseMat A = DenseMat::Zero(p.m, p.total_dim());
  int col = 0;
  for (const auto& blk : p.blocks) {
    if (blk.A.rows() == p.m) A.block(0, col, p.m, blk.n) = DenseMat(blk.A);
    col += blk.n;
  }
  return A;
}

int coupling_rank(const Problem& p) {
  if (p.m == 0) return 0;
  const DenseMat A = stacked_coupling(p);
  if (A.cols() == 0) return 0;
  Eigen::ColPivHouseholderQR<DenseMat> qr(A);
  qr.setThreshold(kRankDropTol);
  return static_cast<int>(qr.rank());
}

ValidationReport validate_problem(const Problem& p) {
  ValidationReport r;
  if (p.T() < 1) r.errors.push_back("problem has no blocks (T must be >= 1)");
  if (p.m < 0) r.errors.push_back("m must be nonnegative");
  if (p.b.size() != p.m) {
    r.errors.push_back("b has length " + std::to_string(p.b.size()) + ", expected m = " +
                       std::to_string(p.m));
  }
  bool dims_ok = true;
  for (int t = 0; t < p.T(); ++t) {
    const auto& blk = p.blocks[t];
    const std::string tag = "block " + std::to_string(t) + ": ";
    if (blk.n < 1) {
      r.errors.push_back(tag + "n must be >= 1");
      dims_ok = false;
      continue;
    }
    if (blk.objective.dim() != blk.n) r.errors.push_back(tag + "objective dimension != n");
    if (blk.set.lower.size() != blk.n || blk.set.upper.size() != blk.n) {
      r.errors.push_back(tag + "bounds dimension != n");
    } else {
      for (int i = 0; i < blk.n; ++i) {
        if (std::isnan(blk.set.lower[i]) || std::isnan(blk.set.upper[i]) ||
            blk.set.lower[i] > blk.set.upper[i]) {
          r.errors.push_back(tag + "lower > upper at coordinate " + std::to_string(i));
        }
      }
    }
    for (std::size_t e = 0; e < blk.set.equalities.size(); ++e) {
      if (blk.set.equalities[e].dim() != blk.n) {
        r.errors.push_back(tag + "equality " + std::to_string(e) + " dimension != n");
      }
    }
    if (blk.A.rows() != p.m || blk.A.cols() != blk.n) {
      r.errors.push_back(tag + "coupling matrix is " + std::to_string(blk.A.rows()) + "x" +
                         std::to_string(blk.A.cols()) + ", expected " + std::to_string(p.m) +
                         "x" + std::to_string(blk.n));
      dims_ok = false;
    }
    if (blk.set.has_equalities() && !blk.set.all_bounds_finite()) {
      r.warnings.push_back(tag + "equalities present but bounds are not all finite; "
                                 "compactness of X_t is not verified");
    }
  }
  if (dims_ok && p.T() >= 1 && p.m > 0 && coupling_rank(p) < p.m) {
    r.errors.push_back("coupling matrix rank-deficient");
  }
  return r;
}

// ---------------------------------------------------------------------------
// JSON ingestion
// ---------------------------------------------------------------------------

namespace {

const Json& require(const Json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ProblemError("schema: " + path + " must be an object");
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ProblemError("schema: missing required field \"" + std::string(key) + "\" at " +
                       (path.empty() ? std::string("<root>") : path));
  }
  return *it;
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

int as_int(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ProblemError("schema: " + path + " must be an integer");
  return j.get<int>();
}

double as_number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ProblemError("schema: " + path + " must be a number");
  return j.get<double>();
}

Vec as_vector(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ProblemError("schema: " + path + " must be an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = as_number(j[i], path + "[" + std::to_string(i) + "]");
  }
  return v;
}

Vec as_bound_vector(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ProblemError("schema: " + path + " must be an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    const std::string ep = path + "[" + std::to_string(i) + "]";
    if (e.is_string()) {
      const auto s = e.get<std::string>();
      if (s == "inf" || s == "+inf") {
        v[static_cast<Eigen::Index>(i)] = kInf;
      } else if (s == "-inf") {
        v[static_cast<Eigen::Index>(i)] = -kInf;
      } else {
        throw ProblemError("schema: " + ep + " must be a number, \"inf\" or \"-inf\"");
      }
    } else {
      v[static_cast<Eigen::Index>(i)] = as_number(e, ep);
    }
  }
  return v;
}

SpMat as_triplet_matrix(const Json& j, int rows, int cols, const std::string& path) {
  if (!j.is_array()) throw ProblemError("schema: " + path + " must be an array of triplets");
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) {
    const auto& e = j[k];
    const std::string ep = path + "[" + std::to_string(k) + "]";
    if (!e.is_array() || e.size() != 3) throw ProblemError("schema: " + ep + " must be [row, col, value]");
    const int r = as_int(e[0], ep + "[0]");
    const int c = as_int(e[1], ep + "[1]");
    const double v = as_number(e[2], ep + "[2]");
    if (r < 0 || r >= rows || c < 0 || c >= cols) {
      throw ProblemError("schema: " + ep + " index (" + std::to_string(r) + "," +
                         std::to_string(c) + ") outside " + std::to_string(rows) + "x" +
                         std::to_string(cols));
    }
    trips.emplace_back(r, c, v);
  }
  return sparse_from_triplets(rows, cols, trips);
}

SmoothFunction parse_function(const Json& j, int n, const std::string& path) {
  const auto& type = require(j, "type", path);
  if (!type.is_string()) throw ProblemError("schema: " + join(path, "type") + " must be a string");
  const auto kind = type.get<std::string>();
  if (kind == "quadratic") {
    Vec c = j.contains("c") ? as_vector(j.at("c"), join(path, "c")) : Vec::Zero(n);
    if (c.size() != n) {
      throw ProblemError("schema: " + join(path, "c") + " has length " + std::to_string(c.size()) +
                         ", expected " + std::to_string(n));
    }
    SpMat Q = j.contains("Q") ? as_triplet_matrix(j.at("Q"), n, n, join(path, "Q")) : SpMat(n, n);
    const double c0 = j.contains("c0") ? as_number(j.at("c0"), join(path, "c0")) : 0.0;
    return SmoothFunction::quadratic(Q, std::move(c), c0);
  }
  if (kind == "builtin") {
    const auto& name = require(j, "name", path);
    if (!name.is_string()) throw ProblemError("schema: " + join(path, "name") + " must be a string");
    const Json payload = j.contains("payload") ? j.at("payload") : Json::object();
    try {
      return SmoothFunction::builtin(name.get<std::string>(), payload, n);
    } catch (const ProblemError& e) {
      throw ProblemError(std::string(e.what()) + " (at " + path + ")");
    }
  }
  throw ProblemError("schema: " + join(path, "type") + " must be \"quadratic\" or \"builtin\"");
}

Json function_to_json(const SmoothFunction& f);

Json triplets_to_json(const SpMat& M) {
  Json out = Json::array();
  for (int r = 0; r < M.outerSize(); ++r) {
    for (SpMat::InnerIterator it(M, r); it; ++it) {
      out.push_back(Json::array({static_cast<int>(it.row()), static_cast<int>(it.col()), it.value()}));
    }
  }
  return out;
}

Json vector_to_json(const Vec& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Json bounds_to_json(const Vec& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] == kInf) {
      out.push_back("inf");
    } else if (v[i] == -kInf) {
      out.push_back("-inf");
    } else {
      out.push_back(v[i]);
    }
  }
  return out;
}

Json function_to_json(const SmoothFunction& f) {
  if (f.is_quadratic()) {
    const auto& q = f.as_quadratic();
    return Json{{"type", "quadratic"}, {"Q", triplets_to_json(q.Q)}, {"c", vector_to_json(q.c)}, {"c0", q.c0}};
  }
  const auto& b = f.as_builtin();
  return Json{{"type", "builtin"}, {"name", b.name}, {"payload", b.payload}};
}

Problem problem_from_json(const Json& doc) {
  if (!doc.is_object()) throw ProblemError("schema: document root must be an object");
  Problem p;
  p.m = as_int(require(doc, "m", ""), "m");
  if (p.m < 0) throw ProblemError("schema: m must be nonnegative");
  p.b = as_vector(require(doc, "b", ""), "b");
  const auto& blocks = require(doc, "blocks", "");
  if (!blocks.is_array()) throw ProblemError("schema: blocks must be an array");
  for (std::size_t t = 0; t < blocks.size(); ++t) {
    const std::string bp = "blocks[" + std::to_string(t) + "]";
    const auto& jb = blocks[t];
    BlockSpec blk;
    blk.n = as_int(require(jb, "n", bp), join(bp, "n"));
    if (blk.n < 1) throw ProblemError("schema: " + join(bp, "n") + " must be >= 1");
    blk.objective = parse_function(require(jb, "objective", bp), blk.n, join(bp, "objective"));
    if (jb.contains("bounds")) {
      const auto& jbounds = jb.at("bounds");
      const std::string pp = join(bp, "bounds");
      blk.set.lower = jbounds.contains("lower") ? as_bound_vector(jbounds.at("lower"), join(pp, "lower"))
                                                : Vec::Constant(blk.n, -kInf);
      blk.set.upper = jbounds.contains("upper") ? as_bound_vector(jbounds.at("upper"), join(pp, "upper"))
                                                : Vec::Constant(blk.n, kInf);
      if (blk.set.lower.size() != blk.n) throw ProblemError("schema: " + join(pp, "lower") + " length != n");
      if (blk.set.upper.size() != blk.n) throw ProblemError("schema: " + join(pp, "upper") + " length != n");
    } else {
      blk.set.lower = Vec::Constant(blk.n, -kInf);
      blk.set.upper = Vec::Constant(blk.n, kInf);
    }
    if (jb.contains("equalities")) {
      const auto& jeq = jb.at("equalities");
      if (!jeq.is_array()) throw ProblemError("schema: " + join(bp, "equalities") + " must be an array");
      for (std::size_t e = 0; e < jeq.size(); ++e) {
        blk.set.equalities.push_back(
            parse_function(jeq[e], blk.n, join(bp, "equalities") + "[" + std::to_string(e) + "]"));
      }
    }
    blk.A = as_triplet_matrix(require(jb, "A", bp), p.m, blk.n, join(bp, "A"));
    p.blocks.push_back(std::move(blk));
  }
  if (doc.contains("metadata")) p.metadata = doc.at("metadata");
  return p;
}

}  // namespace

Problem load_problem(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw ProblemError(std::string("parse error: ") + e.what());
  }
  return problem_from_json(doc);
}

Problem load_problem_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ProblemError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_problem(ss.str());
}

Json problem_to_json(const Problem& p) {
  Json doc;
  doc["m"] = p.m;
  doc["b"] = vector_to_json(p.b);
  Json blocks = Json::array();
  for (const auto& blk : p.blocks) {
    Json eqs = Json::array();
    for (const auto& e : blk.set.equalities) eqs.push_back(function_to_json(e));
    blocks.push_back(Json{{"n", blk.n},
                          {"objective", function_to_json(blk.objective)},
                          {"bounds", {{"lower", bounds_to_json(blk.set.lower)}, {"upper", bounds_to_json(blk.set.upper)}}},
                          {"equalities", std::move(eqs)},
                          {"A", triplets_to_json(blk.A)}});
  }
  doc["blocks"] = std::move(blocks);
  if (!p.metadata.empty()) doc["metadata"] = p.metadata;
  return doc;
}

std::string serialize_problem(const Problem& p) { return problem_to_json(p).dump(1); }

Problem variable_splitting_transform(const Problem& p) {
  Problem out;
  out.m = p.m;
  out.b = p.b;
  out.metadata = p.metadata;
  out.metadata["split_from_dims"] = Json::array();
  for (const auto& blk : p.blocks) {
    out.metadata["split_from_dims"].push_back(blk.n);
    const int n = blk.n;
    const int n2 = n + p.m;
    BlockSpec nb;
    nb.n = n2;
    if (blk.objective.is_quadratic()) {
      const auto& q = blk.objective.as_quadratic();
      std::vector<Eigen::Triplet<double>> trips;
      for (int r = 0; r < q.Q.outerSize(); ++r) {
        for (SpMat::InnerIterator it(q.Q, r); it; ++it) trips.emplace_back(it.row(), it.col(), it.value());
      }
      Vec c = Vec::Zero(n2);
      c.head(n) = q.c;
      nb.objective = SmoothFunction::quadratic(sparse_from_triplets(n2, n2, trips), std::move(c), q.c0);
    } else {
      const auto& bf = blk.objective.as_builtin();
      nb.objective = SmoothFunction::builtin(bf.name, bf.payload, n2);
    }
    nb.set.lower = Vec::Constant(n2, -kInf);
    nb.set.upper = Vec::Constant(n2, kInf);
    nb.set.lower.head(n) = blk.set.lower;
    nb.set.upper.head(n) = blk.set.upper;
    for (const auto& e : blk.set.equalities) {
      if (e.is_quadratic()) {
        const auto& q = e.as_quadratic();
        std::vector<Eigen::Triplet<double>> trips;
        for (int r = 0; r < q.Q.outerSize(); ++r) {
          for (SpMat::InnerIterator it(q.Q, r); it; ++it) trips.emplace_back(it.row(), it.col(), it.value());
        }
        Vec c = Vec::Zero(n2);
        c.head(n) = q.c;
        nb.set.equalities.push_back(SmoothFunction::quadratic(sparse_from_triplets(n2, n2, trips), std::move(c), q.c0));
      } else {
        const auto& bf = e.as_builtin();
        nb.set.equalities.push_back(SmoothFunction::builtin(bf.name, bf.payload, n2));
      }
    }
    // A_t x_t - y_t = 0, one scalar equality per coupling row.
    const DenseMat At(blk.A);
    for (int i = 0; i < p.m; ++i) {
      Vec a = Vec::Zero(n2);
      a.head(n) = At.row(i).transpose();
      a[n + i] = -1.0;
      nb.set.equalities.push_back(SmoothFunction::affine(std::move(a), 0.0));
    }
    std::vector<Eigen::Triplet<double>> sel;
    for (int i = 0; i < p.m; ++i) sel.emplace_back(i, n + i, 1.0);
    nb.A = sparse_from_triplets(p.m, n2, sel);
    out.blocks.push_back(std::move(nb));
  }
  return out;
}

}  // namespace proxjac
