#include "fdrsvm/client.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace fdrsvm {

using solver::ConvexProgram;
using solver::ProgramBuilder;

void ClientConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("ClientConfig: " + what); };
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) fail("epsilon must be positive");
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) fail("kappa must be nonnegative");
  if (!(alpha > 0.0 && alpha <= 1.0)) fail("alpha must lie in (0, 1]");
  if (!(tau >= 0.0) || !std::isfinite(tau)) fail("tau must be nonnegative");
  if (!(rho > 0.0) || !std::isfinite(rho)) fail("rho must be positive");
}

double WorstCaseDistribution::risk(const Vector& w) const {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    if (s.beta_plus > 0.0) total += s.beta_plus * hinge_loss(w, {s.z_plus, s.y});
    if (s.beta_minus > 0.0) total += s.beta_minus * hinge_loss(w, {s.z_minus, -s.y});
    if (s.beta_zero > 0.0) total += s.beta_zero * hinge_loss(w, {s.x_hat, s.y});
  }
  return total / static_cast<double>(samples.size());
}

double WorstCaseDistribution::transport_cost(const TransportCostSpec& spec) const {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    if (s.beta_plus > 0.0) total += s.beta_plus * norm(Vector(s.z_plus - s.x_hat), spec.norm);
    if (s.beta_minus > 0.0) total += s.beta_minus * (norm(Vector(s.z_minus - s.x_hat), spec.norm) + spec.kappa);
  }
  return total / static_cast<double>(samples.size());
}

ConvexProgram build_sm_lp(const GlobalModel& w, const DatasetView& data, const ClientConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("build_sm_lp: empty dataset");
  if (static_cast<std::size_t>(w.w.size()) != data.dim()) throw std::invalid_argument("build_sm_lp: model dimension mismatch");
  if (!data.in_unit_box()) throw std::invalid_argument("build_sm_lp: features must lie in [0, 1]");

  const int dim = static_cast<int>(data.dim());
  const int count = static_cast<int>(data.size());
  const SmLpLayout layout{dim, cfg.norm};
  const int width = layout.width();
  const double inv_n = 1.0 / count;

  ProgramBuilder b(width * count);
  std::vector<std::pair<int, double>> budget;
  budget.reserve(static_cast<std::size_t>(3 * count));

  for (int n = 0; n < count; ++n) {
    const auto& sample = data[static_cast<std::size_t>(n)];
    const int base = n * width;
    const double y = sample.y;
    const double margin = y * w.w.dot(sample.x);
    const int bp = base + layout.beta_plus();
    const int bm = base + layout.beta_minus();

    // maximize beta+ (1 - y<w,x>) + beta- (1 + y<w,x>) + y<w, q+ - q->, negated
    b.set_cost(bp, -inv_n * (1.0 - margin));
    b.set_cost(bm, -inv_n * (1.0 + margin));
    for (int p = 0; p < dim; ++p) {
      b.set_cost(base + layout.q_plus(p), -inv_n * y * w.w[p]);
      b.set_cost(base + layout.q_minus(p), inv_n * y * w.w[p]);
    }

    for (const bool plus : {true, false}) {
      const int beta = plus ? bp : bm;
      const int t = base + (plus ? layout.t_plus() : layout.t_minus());
      std::vector<std::pair<int, double>> norm_sum;
      for (int p = 0; p < dim; ++p) {
        const int q = base + (plus ? layout.q_plus(p) : layout.q_minus(p));
        const double xp = sample.x[p];
        // 0 <= beta x - q <= beta keeps z = x - q/beta inside the box
        b.add_ineq({{beta, -xp}, {q, 1.0}}, 0.0);
        b.add_ineq({{beta, xp - 1.0}, {q, -1.0}}, 0.0);
        if (cfg.norm == NormKind::LInf) {
          b.add_ineq({{q, 1.0}, {t, -1.0}}, 0.0);
          b.add_ineq({{q, -1.0}, {t, -1.0}}, 0.0);
        } else {
          const int u = base + (plus ? layout.u_plus(p) : layout.u_minus(p));
          b.add_ineq({{q, 1.0}, {u, -1.0}}, 0.0);
          b.add_ineq({{q, -1.0}, {u, -1.0}}, 0.0);
          norm_sum.emplace_back(u, 1.0);
        }
      }
      if (cfg.norm == NormKind::L1) {
        norm_sum.emplace_back(t, -1.0);
        b.add_eq(norm_sum, 0.0);
      }
      b.add_ineq({{beta, -1.0}}, 0.0);
      budget.emplace_back(t, 1.0);
    }
    b.add_ineq({{bp, 1.0}, {bm, 1.0}}, 1.0);
    budget.emplace_back(bm, cfg.kappa);
  }
  b.add_ineq(budget, count * cfg.epsilon);
  return b.build();
}

WorstCaseDistribution extract_worst_case(const solver::SolverSolution& sol, const DatasetView& data,
                                         const ClientConfig& cfg) {
  const int dim = static_cast<int>(data.dim());
  const SmLpLayout layout{dim, cfg.norm};
  const int width = layout.width();
  if (sol.x_star.size() != static_cast<Eigen::Index>(width) * static_cast<Eigen::Index>(data.size())) {
    throw std::invalid_argument("extract_worst_case: solution does not match the LP layout");
  }

  WorstCaseDistribution dist;
  dist.samples.reserve(data.size());
  for (std::size_t n = 0; n < data.size(); ++n) {
    const auto& sample = data[n];
    const auto block = sol.x_star.segment(static_cast<Eigen::Index>(n) * width, width);
    WorstCaseSample out;
    out.x_hat = sample.x;
    out.y = sample.y;

    auto atom = [&](double beta, int q_offset, Vector& z) {
      if (!(beta > kAtomDropTolerance)) return 0.0;
      z = (sample.x - block.segment(q_offset, dim) / beta).cwiseMax(0.0).cwiseMin(1.0);
      return std::min(beta, 1.0);
    };
    out.beta_plus = atom(block[layout.beta_plus()], layout.q_plus(0), out.z_plus);
    out.beta_minus = atom(block[layout.beta_minus()], layout.q_minus(0), out.z_minus);
    const double used = out.beta_plus + out.beta_minus;
    if (used > 1.0) {
      // solver slack on beta+ + beta- <= 1
      out.beta_plus /= used;
      out.beta_minus /= used;
    }
    out.beta_zero = std::max(0.0, 1.0 - out.beta_plus - out.beta_minus);
    dist.samples.push_back(std::move(out));
  }
  return dist;
}

Vector sm_subgradient(const GlobalModel& w, const WorstCaseDistribution& dist) {
  Vector v = Vector::Zero(w.w.size());
  if (dist.samples.empty()) return v;
  // Hinge at an atom: active when the residual is nonnegative; at the kink
  // (|r| <= tolerance) the active endpoint is taken.
  auto add = [&](double beta, const Vector& z, double sign_y) {
    if (beta <= 0.0) return;
    const double r = 1.0 - sign_y * w.w.dot(z);
    if (r >= -kKinkTolerance) v.noalias() -= beta * sign_y * z;
  };
  for (const auto& s : dist.samples) {
    add(s.beta_plus, s.z_plus, s.y);
    add(s.beta_minus, s.z_minus, -s.y);
    add(s.beta_zero, s.x_hat, s.y);
  }
  return v / static_cast<double>(dist.samples.size());
}

DualRisk worst_case_risk_dual_detail(const Vector& w, const DatasetView& data, const ClientConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("worst_case_risk_dual: empty dataset");
  if (static_cast<std::size_t>(w.size()) != data.dim()) throw std::invalid_argument("worst_case_risk_dual: dimension mismatch");

  const std::size_t count = data.size();
  const double inv_n = 1.0 / static_cast<double>(count);
  const double floor = dual_norm(w, cfg.norm);
  std::vector<double> keep(count), flip(count);
  for (std::size_t n = 0; n < count; ++n) {
    const double margin = data[n].y * w.dot(data[n].x);
    keep[n] = std::max(0.0, 1.0 - margin);
    flip[n] = std::max(0.0, 1.0 + margin);
  }
  auto phi = [&](double lambda) {
    double total = 0.0;
    for (std::size_t n = 0; n < count; ++n) total += std::max(keep[n], flip[n] - cfg.kappa * lambda);
    return cfg.epsilon * lambda + inv_n * total;
  };
  if (cfg.kappa == 0.0) return {phi(floor), floor};

  // Breakpoints where the flipped-label term stops binding. phi is convex;
  // its right slope at lambda is eps - (kappa/N) * #{breakpoints > lambda}.
  std::vector<double> candidates{floor};
  for (std::size_t n = 0; n < count; ++n) {
    const double bp = (flip[n] - keep[n]) / cfg.kappa;
    if (bp > floor) candidates.push_back(bp);
  }
  std::sort(candidates.begin() + 1, candidates.end());
  const std::size_t k = candidates.size() - 1;
  std::size_t j = 0;
  for (; j <= k; ++j) {
    const auto above = static_cast<double>(candidates.end() - std::upper_bound(candidates.begin() + 1, candidates.end(), candidates[j]));
    if (cfg.epsilon - cfg.kappa * inv_n * above >= 0.0) break;
  }
  j = std::min(j, k);
  // Rounding can misplace the slope sign change by one breakpoint.
  DualRisk best{phi(candidates[j]), candidates[j]};
  for (std::size_t i : {j > 0 ? j - 1 : j, std::min(j + 1, k)}) {
    const double value = phi(candidates[i]);
    if (value < best.value) best = {value, candidates[i]};
  }
  return best;
}

double worst_case_risk_dual(const GlobalModel& w, const DatasetView& data, const ClientConfig& cfg) {
  return worst_case_risk_dual_detail(w.w, data, cfg).value;
}

SmStep sm_client_step(const GlobalModel& w, const DatasetView& data, const ClientConfig& cfg,
                      const solver::SolverConfig& solver_cfg, std::size_t client_id) {
  const auto lp = build_sm_lp(w, data, cfg);
  const auto sol = solver::solve(lp, solver_cfg);
  if (sol.status == solver::SolverStatus::NumericalFailure) {
    throw ClientError(client_id, "worst-case LP failed: " + sol.diagnostics);
  }
  SmStep step;
  step.distribution = extract_worst_case(sol, data, cfg);
  step.subgradient = sm_subgradient(w, step.distribution);
  step.solver_iterations = sol.iterations;
  return step;
}

ConvexProgram build_admm_qp(const GlobalModel& w_global, const ClientModel& client, const DatasetView& data,
                            const ClientConfig& cfg) {
  if (!(cfg.rho >= 0.0) || !(cfg.tau >= 0.0)) throw std::invalid_argument("build_admm_qp: rho and tau must be nonnegative");
  if (!(cfg.epsilon > 0.0) || !(cfg.kappa >= 0.0)) throw std::invalid_argument("build_admm_qp: invalid radius or kappa");
  if (data.empty()) throw std::invalid_argument("build_admm_qp: empty dataset");
  const int dim = static_cast<int>(data.dim());
  if (w_global.w.size() != dim || client.mu.size() != dim) throw std::invalid_argument("build_admm_qp: dimension mismatch");

  const int count = static_cast<int>(data.size());
  const AdmmQpLayout layout{dim, count, cfg.norm};
  ProgramBuilder b(layout.width());
  const double inv_n = 1.0 / count;

  for (int p = 0; p < dim; ++p) {
    const double curvature = cfg.rho + 2.0 * cfg.tau;
    if (curvature > 0.0) b.add_quadratic_diag(layout.w(p), curvature);
    b.set_cost(layout.w(p), -cfg.rho * (w_global.w[p] - client.mu[p]));
  }
  b.set_cost(layout.lambda(), cfg.epsilon);

  std::vector<std::pair<int, double>> row;
  row.reserve(static_cast<std::size_t>(dim + 2));
  for (int n = 0; n < count; ++n) {
    const auto& sample = data[static_cast<std::size_t>(n)];
    const int s = layout.s(n);
    b.set_cost(s, inv_n);
    // 1 - y<w,x> <= s
    row.clear();
    for (int p = 0; p < dim; ++p) {
      if (sample.x[p] != 0.0) row.emplace_back(layout.w(p), -sample.y * sample.x[p]);
    }
    row.emplace_back(s, -1.0);
    b.add_ineq(row, -1.0);
    b.add_ineq({{s, -1.0}}, 0.0);
    // 1 + y<w,x> - kappa lambda <= s
    for (std::size_t i = 0; i + 1 < row.size(); ++i) row[i].second = -row[i].second;
    row.back() = {layout.lambda(), -cfg.kappa};
    row.emplace_back(s, -1.0);
    b.add_ineq(row, -1.0);
  }

  // lambda >= ||w||_* for the dual of the cost norm
  if (cfg.norm == NormKind::L1) {
    for (int p = 0; p < dim; ++p) {
      b.add_ineq({{layout.w(p), 1.0}, {layout.lambda(), -1.0}}, 0.0);
      b.add_ineq({{layout.w(p), -1.0}, {layout.lambda(), -1.0}}, 0.0);
    }
  } else {
    std::vector<std::pair<int, double>> sum;
    for (int p = 0; p < dim; ++p) {
      b.add_ineq({{layout.w(p), 1.0}, {layout.u(p), -1.0}}, 0.0);
      b.add_ineq({{layout.w(p), -1.0}, {layout.u(p), -1.0}}, 0.0);
      sum.emplace_back(layout.u(p), 1.0);
    }
    sum.emplace_back(layout.lambda(), -1.0);
    b.add_ineq(sum, 0.0);
  }
  return b.build();
}

ClientModel admm_client_step(const GlobalModel& w_global, const ClientModel& client, const DatasetView& data,
                             const ClientConfig& cfg, const solver::SolverConfig& solver_cfg,
                             std::size_t client_id) {
  const auto qp = build_admm_qp(w_global, client, data, cfg);
  const auto sol = solver::solve(qp, solver_cfg);
  if (sol.status == solver::SolverStatus::NumericalFailure) {
    throw ClientError(client_id, "ADMM subproblem failed: " + sol.diagnostics);
  }
  return {sol.x_star.head(static_cast<Eigen::Index>(data.dim())), client.mu};
}

ClientModel admm_multiplier_update(const ClientModel& client, const GlobalModel& w_global) {
  if (client.w.size() != w_global.w.size() || client.mu.size() != w_global.w.size()) {
    throw std::invalid_argument("admm_multiplier_update: dimension mismatch");
  }
  return {client.w, client.mu + client.w - w_global.w};
}

double wasserstein_radius(double eta, std::size_t n, double a, double c1, double c2, double c3, std::size_t dim) {
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("wasserstein_radius: eta must lie in (0, 1)");
  if (n == 0 || dim == 0) throw std::invalid_argument("wasserstein_radius: N and P must be positive");
  if (!(a > 1.0) || !(c1 > 0.0) || !(c2 > 0.0) || !(c3 > 0.0)) {
    throw std::invalid_argument("wasserstein_radius: requires a > 1 and positive constants");
  }
  const double log_term = std::log(c1 / eta);
  const double base = log_term / (c2 * static_cast<double>(n));
  const bool small_sample = static_cast<double>(n) < log_term / (c2 * c3);
  // c1 < eta makes the log negative; the radius is then zero
  if (base <= 0.0) return 0.0;
  return std::pow(base, small_sample ? 1.0 / a : 1.0 / static_cast<double>(dim));
}

}  // namespace fdrsvm
