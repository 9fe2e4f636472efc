// Primal-dual interior point solver for convex QPs with linear constraints:
//
//   minimize    (1/2) x'Qx + c'x
//   subject to  A_ineq x <= b_ineq
//               A_eq   x  = b_eq
//
// Variables are free unless a constraint row bounds them. LPs are the Q = 0
// special case.

#pragma once

#include "fdrsvm/core.hpp"

#include <Eigen/SparseCore>

#include <string>
#include <utility>
#include <vector>

namespace fdrsvm::solver {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct ConvexProgram {
  int n = 0;
  SparseMatrix Q;  // n x n symmetric PSD; may have no nonzeros
  Vector c;
  SparseMatrix A_ineq;  // m x n
  Vector b_ineq;
  SparseMatrix A_eq;  // k x n
  Vector b_eq;

  int num_ineq() const { return static_cast<int>(A_ineq.rows()); }
  int num_eq() const { return static_cast<int>(A_eq.rows()); }
  bool is_lp() const { return Q.nonZeros() == 0; }

  double objective(const Vector& x) const;

  /// Throws std::invalid_argument on inconsistent dimensions or asymmetric Q.
  void validate() const;
};

/// Row-by-row construction of a ConvexProgram.
class ProgramBuilder {
 public:
  explicit ProgramBuilder(int n);

  int n() const { return n_; }
  void set_cost(int var, double value) {
    check_var(var);
    c_[var] = value;
  }
  void add_cost(int var, double value) {
    check_var(var);
    c_[var] += value;
  }
  void add_quadratic_diag(int var, double value);

  /// Adds the row  sum(coef * x[var]) <= rhs  and returns its index.
  int add_ineq(std::initializer_list<std::pair<int, double>> terms, double rhs);
  int add_ineq(const std::vector<std::pair<int, double>>& terms, double rhs);
  int add_eq(std::initializer_list<std::pair<int, double>> terms, double rhs);
  int add_eq(const std::vector<std::pair<int, double>>& terms, double rhs);

  ConvexProgram build() const;

 private:
  void check_var(int var) const;

  int n_;
  Vector c_;
  std::vector<Eigen::Triplet<double>> q_;
  std::vector<Eigen::Triplet<double>> ineq_;
  std::vector<double> b_ineq_;
  std::vector<Eigen::Triplet<double>> eq_;
  std::vector<double> b_eq_;
};

enum class SolverStatus { Optimal, MaxIterations, NumericalFailure };

std::string_view to_string(SolverStatus status);

struct SolverSolution {
  Vector x_star;
  double objective = 0.0;
  SolverStatus status = SolverStatus::NumericalFailure;
  double kkt_residual = 0.0;
  int iterations = 0;
  Vector ineq_duals;  // z >= 0, one per inequality row
  Vector eq_duals;
  std::string diagnostics;

  bool optimal() const { return status == SolverStatus::Optimal; }
};

struct SolverConfig {
  double eps2 = 1e-8;          // relative KKT tolerance
  int max_iterations = 200;
  double regularization = 1e-10;  // static diagonal shift on the KKT matrix
};

/// Mehrotra predictor-corrector on the regularized quasi-definite augmented
/// system. Never throws for numerical trouble; infeasible or unbounded inputs
/// come back as NumericalFailure with a diagnostic string.
SolverSolution solve(const ConvexProgram& program, const SolverConfig& cfg = {});

/// Exact LP optimum by enumerating basic feasible solutions. Test oracle only:
/// requires Q = 0, n <= 12 and a bounded, non-empty feasible polytope; throws
/// std::invalid_argument / std::domain_error otherwise.
SolverSolution solve_lp_by_enumeration(const ConvexProgram& program);

}  // namespace fdrsvm::solver
