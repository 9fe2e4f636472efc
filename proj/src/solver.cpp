#include "fdrsvm/solver.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/OrderingMethods>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fdrsvm::solver {

double ConvexProgram::objective(const Vector& x) const {
  double value = c.dot(x);
  if (Q.nonZeros() > 0) value += 0.5 * x.dot(Q * x);
  return value;
}

void ConvexProgram::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("ConvexProgram: " + what); };
  if (n < 0) fail("negative variable count");
  if (c.size() != n) fail("cost vector length differs from n");
  if (Q.rows() != n || Q.cols() != n) fail("Q must be n x n");
  if (A_ineq.cols() != n || A_ineq.rows() != b_ineq.size()) fail("inequality block dimensions inconsistent");
  if (A_eq.cols() != n || A_eq.rows() != b_eq.size()) fail("equality block dimensions inconsistent");
  if (Q.nonZeros() > 0) {
    SparseMatrix diff = SparseMatrix(Q.transpose()) - Q;
    if (diff.nonZeros() > 0 && diff.coeffs().cwiseAbs().maxCoeff() > 1e-12 * (1.0 + Q.coeffs().cwiseAbs().maxCoeff())) {
      fail("Q is not symmetric");
    }
  }
}

namespace {

int checked_dim(int n) {
  if (n < 0) throw std::invalid_argument("ProgramBuilder: negative variable count");
  return n;
}

}  // namespace

ProgramBuilder::ProgramBuilder(int n) : n_(checked_dim(n)), c_(Vector::Zero(n)) {}

void ProgramBuilder::check_var(int var) const {
  if (var < 0 || var >= n_) {
    throw std::out_of_range("ProgramBuilder: variable " + std::to_string(var) + " outside [0, " + std::to_string(n_) + ")");
  }
}

void ProgramBuilder::add_quadratic_diag(int var, double value) {
  check_var(var);
  if (!(value >= 0.0)) throw std::invalid_argument("ProgramBuilder: quadratic diagonal must be nonnegative");
  q_.emplace_back(var, var, value);
}

int ProgramBuilder::add_ineq(std::initializer_list<std::pair<int, double>> terms, double rhs) {
  return add_ineq(std::vector<std::pair<int, double>>(terms), rhs);
}

int ProgramBuilder::add_ineq(const std::vector<std::pair<int, double>>& terms, double rhs) {
  const int row = static_cast<int>(b_ineq_.size());
  for (const auto& [var, coef] : terms) {
    check_var(var);
    ineq_.emplace_back(row, var, coef);
  }
  b_ineq_.push_back(rhs);
  return row;
}

int ProgramBuilder::add_eq(std::initializer_list<std::pair<int, double>> terms, double rhs) {
  return add_eq(std::vector<std::pair<int, double>>(terms), rhs);
}

int ProgramBuilder::add_eq(const std::vector<std::pair<int, double>>& terms, double rhs) {
  const int row = static_cast<int>(b_eq_.size());
  for (const auto& [var, coef] : terms) {
    check_var(var);
    eq_.emplace_back(row, var, coef);
  }
  b_eq_.push_back(rhs);
  return row;
}

ConvexProgram ProgramBuilder::build() const {
  ConvexProgram p;
  p.n = n_;
  p.c = c_;
  p.Q.resize(n_, n_);
  p.Q.setFromTriplets(q_.begin(), q_.end());
  p.Q.prune(0.0);
  p.A_ineq.resize(static_cast<Eigen::Index>(b_ineq_.size()), n_);
  p.A_ineq.setFromTriplets(ineq_.begin(), ineq_.end());
  p.b_ineq = Eigen::Map<const Vector>(b_ineq_.data(), static_cast<Eigen::Index>(b_ineq_.size()));
  p.A_eq.resize(static_cast<Eigen::Index>(b_eq_.size()), n_);
  p.A_eq.setFromTriplets(eq_.begin(), eq_.end());
  p.b_eq = Eigen::Map<const Vector>(b_eq_.data(), static_cast<Eigen::Index>(b_eq_.size()));
  return p;
}

std::string_view to_string(SolverStatus status) {
  switch (status) {
    case SolverStatus::Optimal:
      return "Optimal";
    case SolverStatus::MaxIterations:
      return "MaxIterations";
    case SolverStatus::NumericalFailure:
      return "NumericalFailure";
  }
  return "?";
}

namespace {

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

// Largest alpha in (0, 1] with v + alpha * dv >= 0.
double max_step(const Vector& v, const Vector& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  }
  return alpha;
}

// Regularized augmented system
//
//   [ Q + dI    A'        E'  ] [dx]
//   [ A       -W - dI     0   ] [dz]
//   [ E         0        -dI  ] [dy]
//
// with W = diag(s / z). Only the lower triangle is stored; the sparsity
// pattern is fixed, so the symbolic analysis runs once per solve.
class KktSystem {
 public:
  KktSystem(const ConvexProgram& p, double reg) : p_(p), reg_(reg), n_(p.n), m_(p.num_ineq()), k_(p.num_eq()) {
    const int dim = n_ + m_ + k_;
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(p.Q.nonZeros() + p.A_ineq.nonZeros() + p.A_eq.nonZeros() + dim));
    for (int col = 0; col < p.Q.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(p.Q, col); it; ++it) {
        if (it.row() >= it.col()) t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
      }
    }
    for (int col = 0; col < p.A_ineq.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(p.A_ineq, col); it; ++it) {
        t.emplace_back(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
      }
    }
    for (int col = 0; col < p.A_eq.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(p.A_eq, col); it; ++it) {
        t.emplace_back(n_ + m_ + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
      }
    }
    for (int i = 0; i < dim; ++i) t.emplace_back(i, i, 0.0);
    K_.resize(dim, dim);
    K_.setFromTriplets(t.begin(), t.end());
    K_.makeCompressed();

    // Lower-triangular column-major storage: the diagonal is the first entry
    // of every column. Remember the base (unregularized) diagonal values.
    diag_pos_.resize(static_cast<std::size_t>(dim));
    base_diag_.resize(dim);
    for (int col = 0; col < dim; ++col) {
      const auto pos = K_.outerIndexPtr()[col];
      diag_pos_[static_cast<std::size_t>(col)] = pos;
      base_diag_[col] = K_.valuePtr()[pos];
    }
    ldlt_.analyzePattern(K_);
    w_ = Vector::Zero(m_);
  }

  // Returns false when the factorization fails even after raising the shift.
  bool factorize(const Vector& w) {
    w_ = w;
    double reg = reg_;
    for (int attempt = 0; attempt < 4; ++attempt) {
      fill_diagonal(reg);
      ldlt_.factorize(K_);
      if (ldlt_.info() == Eigen::Success && ldlt_.vectorD().allFinite()) {
        used_reg_ = reg;
        return true;
      }
      reg *= 100.0;
    }
    return false;
  }

  double used_regularization() const { return used_reg_; }

  // Solves the unregularized system, using the regularized factor plus
  // iterative refinement.
  Vector solve(const Vector& rhs) const {
    Vector d = ldlt_.solve(rhs);
    Vector r = rhs - apply_unregularized(d);
    double rnorm = inf_norm(r);
    const double target = 1e-14 * (1.0 + inf_norm(rhs));
    for (int it = 0; it < 6 && rnorm > target; ++it) {
      Vector candidate = d + ldlt_.solve(r);
      Vector rc = rhs - apply_unregularized(candidate);
      const double cn = inf_norm(rc);
      if (!(cn < rnorm)) break;
      d = std::move(candidate);
      r = std::move(rc);
      rnorm = cn;
    }
    return d;
  }

 private:
  void fill_diagonal(double reg) {
    double* values = K_.valuePtr();
    for (int i = 0; i < n_; ++i) values[diag_pos_[static_cast<std::size_t>(i)]] = base_diag_[i] + reg;
    for (int i = 0; i < m_; ++i) values[diag_pos_[static_cast<std::size_t>(n_ + i)]] = -(w_[i] + reg);
    for (int i = 0; i < k_; ++i) values[diag_pos_[static_cast<std::size_t>(n_ + m_ + i)]] = -reg;
  }

  Vector apply_unregularized(const Vector& v) const {
    const auto vx = v.head(n_);
    const auto vz = v.segment(n_, m_);
    const auto vy = v.tail(k_);
    Vector out(n_ + m_ + k_);
    Vector ox = p_.A_ineq.transpose() * vz + p_.A_eq.transpose() * vy;
    if (p_.Q.nonZeros() > 0) ox += p_.Q * vx;
    out.head(n_) = ox;
    out.segment(n_, m_) = p_.A_ineq * vx - w_.cwiseProduct(vz);
    out.tail(k_) = p_.A_eq * vx;
    return out;
  }

  const ConvexProgram& p_;
  double reg_;
  double used_reg_ = 0.0;
  int n_, m_, k_;
  SparseMatrix K_;
  std::vector<Eigen::Index> diag_pos_;
  Vector base_diag_;
  Vector w_;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

struct Residuals {
  Vector dual;    // Qx + c + A'z + E'y
  Vector primal;  // Ax + s - b
  Vector eq;      // Ex - f
  double mu = 0.0;
  double kkt = 0.0;
};

}  // namespace

SolverSolution solve(const ConvexProgram& p, const SolverConfig& cfg) {
  p.validate();
  if (!(cfg.eps2 > 0.0)) throw std::invalid_argument("SolverConfig: eps2 must be positive");
  if (cfg.max_iterations < 1) throw std::invalid_argument("SolverConfig: max_iterations must be positive");

  const int n = p.n;
  const int m = p.num_ineq();
  const int k = p.num_eq();
  const bool is_qp = !p.is_lp();
  const SparseMatrix At = p.A_ineq.transpose();
  const SparseMatrix Et = p.A_eq.transpose();

  const double b_scale = 1.0 + std::max(inf_norm(p.b_ineq), inf_norm(p.b_eq));
  const double c_scale = 1.0 + inf_norm(p.c);

  SolverSolution out;
  KktSystem kkt(p, cfg.regularization);

  // Starting point: least-squares solve of the system with W = I, then
  // shift slacks and multipliers into the strict interior.
  Vector x(n), s(m), z(m), y(k);
  {
    if (!kkt.factorize(Vector::Ones(m))) {
      out.status = SolverStatus::NumericalFailure;
      out.diagnostics = "KKT factorization failed at the starting point";
      return out;
    }
    Vector rhs(n + m + k);
    rhs << -p.c, p.b_ineq, p.b_eq;
    Vector sol = kkt.solve(rhs);
    x = sol.head(n);
    y = sol.tail(k);
    s = p.b_ineq - p.A_ineq * x;
    z = -s;
    if (m > 0) {
      const double shift_s = std::max(0.0, -1.5 * s.minCoeff());
      const double shift_z = std::max(0.0, -1.5 * z.minCoeff());
      s.array() += shift_s;
      z.array() += shift_z;
      s = s.cwiseMax(1.0);
      z = z.cwiseMax(1.0);
    }
  }

  auto residuals = [&](const Vector& xx, const Vector& ss, const Vector& zz, const Vector& yy) {
    Residuals r;
    r.dual = p.c + At * zz + Et * yy;
    if (is_qp) r.dual += p.Q * xx;
    r.primal = p.A_ineq * xx + ss - p.b_ineq;
    r.eq = p.A_eq * xx - p.b_eq;
    r.mu = m > 0 ? ss.dot(zz) / m : 0.0;
    const double pobj = p.objective(xx);
    const double gap = m > 0 ? ss.dot(zz) / (1.0 + std::abs(pobj)) : 0.0;
    r.kkt = std::max({inf_norm(r.primal) / b_scale, inf_norm(r.eq) / b_scale, inf_norm(r.dual) / c_scale, gap});
    return r;
  };

  auto finish = [&](SolverStatus status, const Residuals& r, int iters, std::string diag) {
    out.x_star = x;
    out.objective = p.objective(x);
    out.status = status;
    out.kkt_residual = r.kkt;
    out.iterations = iters;
    out.ineq_duals = z;
    out.eq_duals = y;
    out.diagnostics = std::move(diag);
    return out;
  };

  // Once the tolerance is met a few extra iterations are taken: near-degenerate
  // programs leave the primal error at roughly sqrt(gap), and the last steps
  // of the method are quadratically convergent and cheap.
  constexpr int kPolishIterations = 3;
  int polished = 0;
  struct {
    Vector x, s, z, y;
    Residuals res;
    int iter = 0;
  } best;
  auto finish_best = [&]() {
    x = best.x;
    s = best.s;
    z = best.z;
    y = best.y;
    return finish(SolverStatus::Optimal, best.res, best.iter, "");
  };

  int stalled = 0;
  Residuals res = residuals(x, s, z, y);
  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    if (!x.allFinite() || !s.allFinite() || !z.allFinite() || !y.allFinite()) {
      if (polished > 0) return finish_best();
      return finish(SolverStatus::NumericalFailure, res, iter, "non-finite iterate");
    }
    if (res.kkt <= cfg.eps2) {
      if (polished == 0 || res.kkt < best.res.kkt) best = {x, s, z, y, res, iter};
      if (polished == kPolishIterations || m == 0 || res.mu <= 1e-16 * b_scale * c_scale) return finish_best();
      ++polished;
    } else if (polished > 0) {
      return finish_best();
    }

    // Infeasibility / unboundedness heuristics.
    if (m + k > 0) {
      const double farkas = -(p.b_ineq.dot(z) + p.b_eq.dot(y));
      const double ray = inf_norm(At * z + Et * y);
      const double dual_size = std::max(inf_norm(z), inf_norm(y));
      if (dual_size > 1e8 && farkas > 0.0 && ray <= 1e-6 * farkas) {
        std::ostringstream msg;
        msg << "primal infeasible: Farkas certificate with b'z = " << -farkas << ", ||A'z|| = " << ray;
        return finish(SolverStatus::NumericalFailure, res, iter, msg.str());
      }
    }
    if (inf_norm(x) > 1e12 * b_scale * c_scale) {
      return finish(SolverStatus::NumericalFailure, res, iter, "primal iterates diverging: problem likely unbounded");
    }
    if (std::max(inf_norm(z), inf_norm(y)) > 1e14 * c_scale) {
      return finish(SolverStatus::NumericalFailure, res, iter, "dual iterates diverging: problem likely infeasible");
    }

    const Vector w = m > 0 ? Vector(s.cwiseQuotient(z)) : Vector(0);
    if (!kkt.factorize(w)) {
      if (polished > 0) return finish_best();
      return finish(SolverStatus::NumericalFailure, res, iter, "KKT factorization failed");
    }

    auto direction = [&](const Vector& rc) {
      Vector rhs(n + m + k);
      rhs.head(n) = -res.dual;
      if (m > 0) rhs.segment(n, m) = -res.primal + rc.cwiseQuotient(z);
      rhs.tail(k) = -res.eq;
      Vector d = kkt.solve(rhs);
      Vector dx = d.head(n);
      Vector dz = d.segment(n, m);
      Vector dy = d.tail(k);
      Vector ds = -res.primal - p.A_ineq * dx;
      return std::tuple{dx, ds, dz, dy};
    };

    // Predictor.
    Vector rc = s.cwiseProduct(z);
    auto [dx_a, ds_a, dz_a, dy_a] = direction(rc);
    double ap = max_step(s, ds_a);
    double ad = max_step(z, dz_a);
    if (is_qp) ap = ad = std::min(ap, ad);

    double sigma = 0.0;
    if (m > 0) {
      const double mu_aff = (s + ap * ds_a).dot(z + ad * dz_a) / m;
      sigma = std::clamp(std::pow(mu_aff / res.mu, 3), 0.0, 1.0);
      rc = rc + ds_a.cwiseProduct(dz_a) - Vector::Constant(m, sigma * res.mu);
    }

    // Corrector.
    auto [dx, ds, dz, dy] = direction(rc);
    // Capped below 1: stepping almost onto the boundary collapses a few s_i z_i
    // far below mu and the method can then cycle without reducing the gap.
    const double eta = std::clamp(1.0 - 10.0 * res.mu, 0.9, 0.99);
    ap = std::min(1.0, eta * max_step(s, ds));
    ad = std::min(1.0, eta * max_step(z, dz));
    if (m == 0) ap = ad = 1.0;
    if (is_qp) ap = ad = std::min(ap, ad);

    x += ap * dx;
    s += ap * ds;
    z += ad * dz;
    y += ad * dy;
    if (m > 0) {
      // Guard against exact zeros from rounding.
      s = s.cwiseMax(std::numeric_limits<double>::min());
      z = z.cwiseMax(std::numeric_limits<double>::min());
    }

    stalled = (std::max(ap, ad) < 1e-10) ? stalled + 1 : 0;
    res = residuals(x, s, z, y);
    if (stalled >= 5) {
      if (polished > 0) return finish_best();
      return finish(SolverStatus::NumericalFailure, res, iter + 1, "step length collapsed: no progress");
    }
  }

  if (polished > 0) {
    if (res.kkt <= cfg.eps2 && res.kkt < best.res.kkt) best = {x, s, z, y, res, cfg.max_iterations};
    return finish_best();
  }
  std::ostringstream msg;
  msg << "iteration limit reached with KKT residual " << res.kkt;
  const auto status = res.kkt <= std::sqrt(cfg.eps2) ? SolverStatus::MaxIterations : SolverStatus::NumericalFailure;
  if (status == SolverStatus::NumericalFailure) msg << " (no convergence; problem may be infeasible or unbounded)";
  return finish(status, res, cfg.max_iterations, msg.str());
}

}  // namespace fdrsvm::solver
