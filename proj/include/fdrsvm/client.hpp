// Per-client computations: the worst-case LP of the subgradient method, the
// extremal distribution it encodes, the risk subgradient, the exact dual
// worst-case risk, and the ADMM client subproblem.

#pragma once

#include "fdrsvm/core.hpp"
#include "fdrsvm/solver.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdrsvm {

struct ClientConfig {
  double epsilon = 0.01;  // Wasserstein radius, > 0
  double kappa = 1.0;     // label flip cost, >= 0
  double alpha = 1.0;     // client weight in (0, 1]
  NormKind norm = NormKind::L1;
  double tau = 0.0;  // strong-convexity term for ADMM-SC; 0 is plain ADMM
  double rho = 1.0;  // ADMM penalty, unused by SM

  TransportCostSpec cost() const { return {norm, kappa}; }

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

/// Raised when a client-side solve fails; carries the client index so the
/// federation can name the culprit.
class ClientError : public std::runtime_error {
 public:
  ClientError(std::size_t client, const std::string& what)
      : std::runtime_error("client " + std::to_string(client) + ": " + what), client_(client) {}
  std::size_t client() const { return client_; }

 private:
  std::size_t client_;
};

/// Worst-case mass attached to one training sample (x̂, ŷ): beta_plus at
/// (z_plus, ŷ), beta_minus at (z_minus, -ŷ), and the remainder beta_zero at
/// the nominal point itself. Dropped atoms have an empty z vector and zero
/// mass.
struct WorstCaseSample {
  Vector x_hat;
  int y = 1;
  double beta_plus = 0.0;
  double beta_minus = 0.0;
  double beta_zero = 0.0;
  Vector z_plus;
  Vector z_minus;
};

struct WorstCaseDistribution {
  std::vector<WorstCaseSample> samples;

  /// Expected hinge loss under the distribution.
  double risk(const Vector& w) const;

  /// Expected transport cost from the empirical distribution.
  double transport_cost(const TransportCostSpec& spec) const;
};

struct ClientModel {
  Vector w;
  Vector mu;  // scaled multipliers
};

inline constexpr double kAtomDropTolerance = 1e-9;
inline constexpr double kKinkTolerance = 1e-10;

/// Per-sample block of the worst-case LP. All offsets are relative to the
/// start of the sample's block; the block has `width` variables.
struct SmLpLayout {
  int dim = 0;
  NormKind norm = NormKind::LInf;

  int beta_plus() const { return 0; }
  int beta_minus() const { return 1; }
  int q_plus(int p) const { return 2 + p; }
  int q_minus(int p) const { return 2 + dim + p; }
  int t_plus() const { return 2 + 2 * dim; }
  int t_minus() const { return 3 + 2 * dim; }
  // L1 only: per-coordinate magnitudes of q
  int u_plus(int p) const { return 4 + 2 * dim + p; }
  int u_minus(int p) const { return 4 + 3 * dim + p; }

  int width() const { return norm == NormKind::L1 ? 4 * dim + 4 : 2 * dim + 4; }
  int ineq_per_sample() const { return 8 * dim + 3; }
  int eq_per_sample() const { return norm == NormKind::L1 ? 2 : 0; }
};

/// Worst-case LP over box-supported distributions, as a minimization of the
/// negated expected loss. Requires features in [0, 1].
solver::ConvexProgram build_sm_lp(const GlobalModel& w, const DatasetView& data, const ClientConfig& cfg);

/// Reads atoms out of an optimal solution of build_sm_lp.
WorstCaseDistribution extract_worst_case(const solver::SolverSolution& sol, const DatasetView& data,
                                         const ClientConfig& cfg);

/// Subgradient of the worst-case risk at w from the extremal distribution.
Vector sm_subgradient(const GlobalModel& w, const WorstCaseDistribution& dist);

struct DualRisk {
  double value = 0.0;
  double lambda = 0.0;
};

/// Exact worst-case risk over the Wasserstein ball with unrestricted feature
/// support, by minimizing the 1-D piecewise-linear dual in lambda.
DualRisk worst_case_risk_dual_detail(const Vector& w, const DatasetView& data, const ClientConfig& cfg);
double worst_case_risk_dual(const GlobalModel& w, const DatasetView& data, const ClientConfig& cfg);

struct SmStep {
  Vector subgradient;
  WorstCaseDistribution distribution;
  int solver_iterations = 0;
};

/// build_sm_lp + solve + extract + subgradient. Throws ClientError on solver
/// failure.
SmStep sm_client_step(const GlobalModel& w, const DatasetView& data, const ClientConfig& cfg,
                      const solver::SolverConfig& solver_cfg, std::size_t client_id = 0);

/// Variable layout of the ADMM client QP.
struct AdmmQpLayout {
  int dim = 0;
  int samples = 0;
  NormKind norm = NormKind::L1;

  int w(int p) const { return p; }
  int lambda() const { return dim; }
  int s(int n) const { return dim + 1 + n; }
  int u(int p) const { return dim + 1 + samples + p; }  // LInf cost norm only
  int width() const { return dim + 1 + samples + (norm == NormKind::LInf ? dim : 0); }
};

/// ADMM client subproblem. The constant (rho/2)||w_global - mu||^2 is
/// omitted from the objective.
solver::ConvexProgram build_admm_qp(const GlobalModel& w_global, const ClientModel& client, const DatasetView& data,
                                    const ClientConfig& cfg);

/// Solves the client subproblem; mu is returned unchanged.
ClientModel admm_client_step(const GlobalModel& w_global, const ClientModel& client, const DatasetView& data,
                             const ClientConfig& cfg, const solver::SolverConfig& solver_cfg,
                             std::size_t client_id = 0);

/// mu <- mu + w_g - w_global
ClientModel admm_multiplier_update(const ClientModel& client, const GlobalModel& w_global);

/// Finite-sample radius for confidence 1 - eta with light-tail constants
/// c1, c2, c3 and exponent a.
double wasserstein_radius(double eta, std::size_t n, double a, double c1, double c2, double c3, std::size_t dim);

}  // namespace fdrsvm
