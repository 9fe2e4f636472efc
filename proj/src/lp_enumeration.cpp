#include "fdrsvm/solver.hpp"

#include <Eigen/LU>
#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fdrsvm::solver {

namespace {

constexpr int kMaxVariables = 12;

// Calls fn(indices) for every size-r subset of {0, ..., m-1} in
// lexicographic order; stops early when fn returns true.
template <typename Fn>
bool for_each_subset(int m, int r, Fn&& fn) {
  if (r < 0 || r > m) return false;
  std::vector<int> idx(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) idx[static_cast<std::size_t>(i)] = i;
  while (true) {
    if (fn(idx)) return true;
    int i = r - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == m - r + i) --i;
    if (i < 0) return false;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < r; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
}

Eigen::MatrixXd stack_rows(const Eigen::MatrixXd& E, const Eigen::MatrixXd& A, const std::vector<int>& rows) {
  Eigen::MatrixXd M(E.rows() + static_cast<Eigen::Index>(rows.size()), A.cols());
  M.topRows(E.rows()) = E;
  for (std::size_t i = 0; i < rows.size(); ++i) M.row(E.rows() + static_cast<Eigen::Index>(i)) = A.row(rows[i]);
  return M;
}

}  // namespace

SolverSolution solve_lp_by_enumeration(const ConvexProgram& p) {
  p.validate();
  if (!p.is_lp()) throw std::invalid_argument("solve_lp_by_enumeration: program has a quadratic term");
  if (p.n > kMaxVariables) {
    throw std::invalid_argument("solve_lp_by_enumeration: " + std::to_string(p.n) + " variables exceeds the limit of " +
                                std::to_string(kMaxVariables));
  }
  const int n = p.n;
  const Eigen::MatrixXd A = Eigen::MatrixXd(p.A_ineq);
  const Eigen::MatrixXd E = Eigen::MatrixXd(p.A_eq);
  const int m = static_cast<int>(A.rows());

  Eigen::MatrixXd all(A.rows() + E.rows(), n);
  all << A, E;
  if (n > 0 && Eigen::FullPivLU<Eigen::MatrixXd>(all).rank() < n) {
    throw std::domain_error("solve_lp_by_enumeration: feasible set contains a line (unbounded polytope)");
  }
  const int rank_e = E.rows() > 0 ? static_cast<int>(Eigen::FullPivLU<Eigen::MatrixXd>(E).rank()) : 0;

  // Recession cone {d : A d <= 0, E d = 0} must be {0}. Its extreme rays are
  // one-dimensional kernels of n-1 independent active rows.
  const double ray_tol = 1e-10;
  const bool has_ray = n > 0 && for_each_subset(m, n - 1 - rank_e, [&](const std::vector<int>& rows) {
    const Eigen::MatrixXd M = stack_rows(E, A, rows);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (lu.rank() != n - 1) return false;
    Eigen::MatrixXd ker = lu.kernel();
    if (ker.cols() != 1) return false;
    Vector d = ker.col(0).normalized();
    for (double sign : {1.0, -1.0}) {
      Vector dir = sign * d;
      if (m == 0 || (A * dir).maxCoeff() <= ray_tol) return true;
    }
    return false;
  });
  if (has_ray) throw std::domain_error("solve_lp_by_enumeration: unbounded polytope (recession direction found)");

  const double feas_tol = 1e-9 * (1.0 + std::max(p.b_ineq.size() ? p.b_ineq.cwiseAbs().maxCoeff() : 0.0,
                                                 p.b_eq.size() ? p.b_eq.cwiseAbs().maxCoeff() : 0.0));
  double best = std::numeric_limits<double>::infinity();
  Vector best_x;
  for_each_subset(m, n - rank_e, [&](const std::vector<int>& rows) {
    const Eigen::MatrixXd M = stack_rows(E, A, rows);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
    if (qr.rank() != n) return false;
    Vector rhs(M.rows());
    rhs.head(E.rows()) = p.b_eq;
    for (std::size_t i = 0; i < rows.size(); ++i) rhs[E.rows() + static_cast<Eigen::Index>(i)] = p.b_ineq[rows[i]];
    Vector x = qr.solve(rhs);
    if ((M * x - rhs).cwiseAbs().maxCoeff() > feas_tol) return false;  // inconsistent equalities
    if (m > 0 && (A * x - p.b_ineq).maxCoeff() > feas_tol) return false;
    if (E.rows() > 0 && (E * x - p.b_eq).cwiseAbs().maxCoeff() > feas_tol) return false;
    const double obj = p.c.dot(x);
    if (obj < best) {
      best = obj;
      best_x = std::move(x);
    }
    return false;
  });
  if (n == 0) {
    best = 0.0;
    best_x = Vector(0);
  }
  if (!std::isfinite(best)) throw std::domain_error("solve_lp_by_enumeration: empty feasible region");

  SolverSolution out;
  out.x_star = best_x;
  out.objective = best;
  out.status = SolverStatus::Optimal;
  out.kkt_residual = 0.0;
  return out;
}

}  // namespace fdrsvm::solver
