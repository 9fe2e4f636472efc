// Synchronous federated training: the server loop, the client loop, server
// update rules and the in-process / loopback drivers that wire them up.

#pragma once

#include "fdrsvm/client.hpp"
#include "fdrsvm/transport.hpp"

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fdrsvm::fed {

enum class Algorithm { SM, ADMM, ADMM_SC };

std::string_view to_string(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view text);

struct FederationConfig {
  Algorithm algorithm = Algorithm::ADMM;
  std::size_t rounds = 1;  // T
  double gamma0 = 1.0;     // SM step size scale, gamma(t) = gamma0 / t
  double rho = 1.0;        // ADMM penalty, shared by all clients
  std::vector<ClientConfig> clients;  // alpha, radius, kappa, norm, tau per client
  Vector w0;                          // empty means zeros
  double mu0 = 1.0;                   // initial value of every multiplier entry
  solver::SolverConfig solver;

  std::size_t num_clients() const { return clients.size(); }
  std::vector<double> alphas() const;

  /// Client settings as the client loop sees them: rho filled in, tau forced
  /// to zero for plain ADMM.
  ClientConfig effective_client(std::size_t g) const;

  /// Throws std::invalid_argument on inconsistent settings.
  void validate(std::size_t dim) const;
};

struct RoundTrace {
  std::size_t t = 0;
  GlobalModel w_after;
  double global_objective = 0.0;  // NaN when the server has no client data
  double consensus_residual = 0.0;
  double wall_time = 0.0;  // seconds
};

struct FederationResult {
  GlobalModel final_model;
  GlobalModel best_model;  // lowest global objective seen; w0 when no rounds ran
  std::size_t best_round = 0;
  std::vector<RoundTrace> trace;
  std::vector<std::string> warnings;
};

class FederationError : public std::runtime_error {
 public:
  FederationError(std::optional<std::size_t> client, const std::string& what)
      : std::runtime_error(what), client_(client) {}
  std::optional<std::size_t> client() const { return client_; }

 private:
  std::optional<std::size_t> client_;
};

/// w - (gamma0 / t) * sum_g alpha_g v_g
GlobalModel sm_server_update(const GlobalModel& w, std::span<const double> alphas, std::span<const Vector> subgradients,
                             std::size_t t, double gamma0);

/// sum_g alpha_g (w_g + mu_g)
GlobalModel admm_server_update(std::span<const double> alphas, std::span<const Vector> client_w,
                               std::span<const Vector> client_mu);

/// Largest rho for which the strongly convex ADMM variant is guaranteed to
/// converge. Requires at least two clients.
double rho_upper_bound(std::span<const double> alphas, std::span<const double> taus);

/// sum_g alpha_g * worst_case_risk_dual(w, data_g, cfg_g)
double global_objective(const GlobalModel& w, std::span<const DatasetView> client_data,
                        std::span<const ClientConfig> clients);

/// Server side of T synchronous rounds over already-connected channels, one
/// per client. client_data is optional (empty span) and only feeds the
/// objective in the trace. When channels arrive in connection order the
/// client behind each one is learned from its first result.
FederationResult run_server(const FederationConfig& cfg, std::span<const std::unique_ptr<transport::Channel>> channels,
                            std::span<const DatasetView> client_data, std::size_t dim,
                            bool channels_in_client_order = false);

struct ClientRuntime {
  std::size_t id = 0;
  Algorithm algorithm = Algorithm::ADMM;
  ClientConfig cfg;
  solver::SolverConfig solver;
  double mu0 = 1.0;
};

/// Client side: answers RoundStart messages until Shutdown. Closes the
/// channel and rethrows when its own computation fails.
void run_client(transport::Channel& channel, const DatasetView& data, const ClientRuntime& runtime);

enum class TransportKind { InProcess, Tcp };

/// Runs server and clients in this process, the clients on their own threads.
/// Tcp uses loopback sockets on an ephemeral port.
FederationResult run_federation(const FederationConfig& cfg, std::span<const DatasetView> client_data,
                                TransportKind transport = TransportKind::InProcess);

}  // namespace fdrsvm::fed
