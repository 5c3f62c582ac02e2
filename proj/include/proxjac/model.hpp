#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace proxjac {

using Vec = Eigen::VectorXd;
using DenseMat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using BlockVecs = std::vector<Vec>;
using Json = nlohmann::json;

/// Raised for malformed problem documents. The message carries the JSON path
/// of the offending field (e.g. "blocks[1].A").
class ProblemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when vector or matrix dimensions disagree with the problem.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// f(x) = 1/2 x^T Q x + c^T x + c0 with Q stored symmetric.
struct QuadraticFunction {
  SpMat Q;
  Vec c;
  double c0 = 0.0;
};

/// Evaluator behind a named builtin. Implementations are immutable once
/// constructed, so evaluation is thread-safe.
class BuiltinEvaluator {
 public:
  virtual ~BuiltinEvaluator() = default;
  virtual double value(const Vec& x) const = 0;
  virtual Vec gradient(const Vec& x) const = 0;
};

struct BuiltinFunction {
  std::string name;
  Json payload;
  std::shared_ptr<const BuiltinEvaluator> impl;
};

/// A C^1 scalar function on a block's ambient space R^n.
class SmoothFunction {
 public:
  SmoothFunction() = default;
  SmoothFunction(QuadraticFunction q, int n);
  SmoothFunction(BuiltinFunction b, int n);

  /// Symmetrizes Q as (Q + Q^T)/2.
  static SmoothFunction quadratic(const SpMat& Q, Vec c, double c0);
  /// Linear/affine function a^T x + c0 (quadratic kind with Q = 0).
  static SmoothFunction affine(Vec a, double c0);
  /// Looks up `name` in the builtin registry; throws ProblemError if unknown.
  static SmoothFunction builtin(std::string name, Json payload, int n);

  int dim() const { return n_; }
  bool is_quadratic() const { return std::holds_alternative<QuadraticFunction>(kind_); }
  const QuadraticFunction& as_quadratic() const { return std::get<QuadraticFunction>(kind_); }
  const BuiltinFunction& as_builtin() const { return std::get<BuiltinFunction>(kind_); }

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;

 private:
  std::variant<QuadraticFunction, BuiltinFunction> kind_;
  int n_ = 0;
};

/// X_t = { x : lower <= x <= upper, c_i(x) = 0 for every equality }.
struct ConstraintSet {
  Vec lower;
  Vec upper;
  std::vector<SmoothFunction> equalities;

  bool has_finite_bounds() const;
  bool all_bounds_finite() const;
  bool has_equalities() const { return !equalities.empty(); }
};

struct BlockSpec {
  int n = 0;
  SmoothFunction objective;
  ConstraintSet set;
  SpMat A;  // m x n coupling matrix
};

/// minimize sum_t f_t(x_t)  s.t.  x_t in X_t,  sum_t A_t x_t = b.
struct Problem {
  int m = 0;
  Vec b;
  std::vector<BlockSpec> blocks;
  /// Free-form provenance (generator name, objective scale, ...). Not part of
  /// the mathematical problem.
  Json metadata = Json::object();

  int T() const { return static_cast<int>(blocks.size()); }
  int total_dim() const;
};

/// rho: coupling penalty, theta: slack penalty, tau_x / tau_z: proximal weights.
struct Params {
  double rho = 1.0;
  double theta = 1.0;
  double tau_x = 0.0;
  double tau_z = 0.0;

  bool operator==(const Params&) const = default;
};

/// Iterate (x^k, z^k, lambda^k) together with the previous iterate and the
/// difference vectors consumed by the Lyapunov and residual formulas.
struct IterateState {
  BlockVecs x;
  Vec z;
  Vec lambda;
  BlockVecs x_prev;
  Vec z_prev;
  Vec lambda_prev;
  Vec dz;       // z^k - z^{k-1}; at k = 0 the convention -(lambda^0 + theta z^0)/tau_z
  Vec dz_prev;  // dz of the previous iteration
  BlockVecs dx_prev;  // x^{k-1} - x^{k-2}; zero for k <= 1
  int k = 0;
};

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;

  bool ok() const { return errors.empty(); }
};

ValidationReport validate_problem(const Problem& p);

/// Numerical rank of the stacked matrix [A_1 ... A_T], pivots below
/// 1e-10 * (largest pivot) counted as zero.
int coupling_rank(const Problem& p);

/// Stacked dense copy of [A_1 ... A_T].
DenseMat stacked_coupling(const Problem& p);

Problem load_problem(std::string_view text);
Problem load_problem_file(const std::string& path);

/// Canonical JSON form: matrices as row-major sorted triplets without
/// duplicates, infinite bounds as "-inf"/"inf".
Json problem_to_json(const Problem& p);
std::string serialize_problem(const Problem& p);

/// Splits every block into (x_t, y_t) with A_t x_t - y_t = 0 folded into X_t
/// and coupling sum_t y_t = b.
Problem variable_splitting_transform(const Problem& p);

SpMat sparse_from_triplets(int rows, int cols,
                           const std::vector<Eigen::Triplet<double>>& triplets);

}  // namespace proxjac
