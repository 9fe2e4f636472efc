#include "fdrsvm/federation.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace fdrsvm::fed {

std::string_view to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::SM:
      return "SM";
    case Algorithm::ADMM:
      return "ADMM";
    case Algorithm::ADMM_SC:
      return "ADMM_SC";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view text) {
  if (text == "SM") return Algorithm::SM;
  if (text == "ADMM") return Algorithm::ADMM;
  if (text == "ADMM_SC" || text == "ADMM-SC") return Algorithm::ADMM_SC;
  throw std::invalid_argument("unknown algorithm '" + std::string(text) + "' (expected SM, ADMM or ADMM_SC)");
}

std::vector<double> FederationConfig::alphas() const {
  std::vector<double> out;
  out.reserve(clients.size());
  for (const auto& c : clients) out.push_back(c.alpha);
  return out;
}

ClientConfig FederationConfig::effective_client(std::size_t g) const {
  ClientConfig c = clients.at(g);
  c.rho = rho;
  if (algorithm != Algorithm::ADMM_SC) c.tau = 0.0;
  return c;
}

void FederationConfig::validate(std::size_t dim) const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("FederationConfig: " + what); };
  if (clients.empty()) fail("at least one client is required");
  for (std::size_t g = 0; g < clients.size(); ++g) {
    try {
      effective_client(g).validate();
    } catch (const std::invalid_argument& e) {
      fail("client " + std::to_string(g) + ": " + e.what());
    }
  }
  const auto a = alphas();
  const double sum = std::accumulate(a.begin(), a.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-12) fail("client weights sum to " + std::to_string(sum) + ", not 1");
  if (algorithm == Algorithm::SM && !(gamma0 > 0.0)) fail("gamma0 must be positive");
  if (algorithm != Algorithm::SM && !(rho > 0.0)) fail("rho must be positive");
  if (algorithm == Algorithm::ADMM_SC) {
    for (const auto& c : clients) {
      if (!(c.tau > 0.0)) fail("ADMM_SC requires tau > 0 for every client");
    }
  }
  if (w0.size() != 0 && static_cast<std::size_t>(w0.size()) != dim) fail("w0 has the wrong dimension");
  if (!std::isfinite(mu0)) fail("mu0 must be finite");
}

GlobalModel sm_server_update(const GlobalModel& w, std::span<const double> alphas, std::span<const Vector> subgradients,
                             std::size_t t, double gamma0) {
  if (t == 0) throw std::invalid_argument("sm_server_update: rounds are numbered from 1");
  if (alphas.size() != subgradients.size()) {
    throw FederationError(std::nullopt, "sm_server_update: expected " + std::to_string(alphas.size()) +
                                            " client results, got " + std::to_string(subgradients.size()));
  }
  Vector step = Vector::Zero(w.w.size());
  for (std::size_t g = 0; g < alphas.size(); ++g) {
    if (subgradients[g].size() != w.w.size()) {
      throw FederationError(g, "sm_server_update: missing or malformed result from client " + std::to_string(g));
    }
    step += alphas[g] * subgradients[g];
  }
  return {w.w - (gamma0 / static_cast<double>(t)) * step};
}

GlobalModel admm_server_update(std::span<const double> alphas, std::span<const Vector> client_w,
                               std::span<const Vector> client_mu) {
  if (alphas.empty() || client_w.size() != alphas.size() || client_mu.size() != alphas.size()) {
    throw FederationError(std::nullopt, "admm_server_update: need one (alpha, w, mu) triple per client");
  }
  const auto dim = client_w[0].size();
  Vector w = Vector::Zero(dim);
  for (std::size_t g = 0; g < alphas.size(); ++g) {
    if (client_w[g].size() != dim || client_mu[g].size() != dim) {
      throw FederationError(g, "admm_server_update: missing or malformed result from client " + std::to_string(g));
    }
    w += alphas[g] * (client_w[g] + client_mu[g]);
  }
  return {w};
}

double rho_upper_bound(std::span<const double> alphas, std::span<const double> taus) {
  const std::size_t count = alphas.size();
  if (count < 2) throw std::invalid_argument("rho_upper_bound: requires at least two clients");
  if (taus.size() != count) throw std::invalid_argument("rho_upper_bound: one tau per client required");
  for (std::size_t g = 0; g < count; ++g) {
    if (!(alphas[g] > 0.0) || !(taus[g] > 0.0)) throw std::invalid_argument("rho_upper_bound: weights and taus must be positive");
  }
  const double G = static_cast<double>(count);
  double bound = 4.0 * alphas[count - 1] * taus[count - 1] / ((G - 1.0) * (G + 2.0));
  for (std::size_t i = 0; i + 1 < count; ++i) {
    const double g = static_cast<double>(i + 1);
    bound = std::min(bound, 4.0 * alphas[i] * taus[i] / (g * (2.0 * G + 1.0 - g)));
  }
  return bound;
}

double global_objective(const GlobalModel& w, std::span<const DatasetView> client_data,
                        std::span<const ClientConfig> clients) {
  if (client_data.size() != clients.size()) throw std::invalid_argument("global_objective: one dataset per client required");
  double total = 0.0;
  for (std::size_t g = 0; g < clients.size(); ++g) total += clients[g].alpha * worst_case_risk_dual(w, client_data[g], clients[g]);
  return total;
}

namespace {

using transport::Channel;
using Clock = std::chrono::steady_clock;

struct Abort {
  std::optional<std::size_t> client;
  std::string message;
};

}  // namespace

FederationResult run_server(const FederationConfig& cfg, std::span<const std::unique_ptr<Channel>> channels,
                            std::span<const DatasetView> client_data, std::size_t dim, bool channels_in_client_order) {
  cfg.validate(dim);
  const std::size_t G = cfg.num_clients();
  if (channels.size() != G) throw std::invalid_argument("run_server: one channel per client required");
  if (!client_data.empty() && client_data.size() != G) throw std::invalid_argument("run_server: one dataset per client required");

  const auto alphas = cfg.alphas();
  const bool admm = cfg.algorithm != Algorithm::SM;
  std::vector<ClientConfig> effective;
  for (std::size_t g = 0; g < G; ++g) effective.push_back(cfg.effective_client(g));

  FederationResult result;
  if (cfg.algorithm == Algorithm::ADMM_SC && G >= 2) {
    std::vector<double> taus;
    for (const auto& c : effective) taus.push_back(c.tau);
    const double bound = rho_upper_bound(alphas, taus);
    if (cfg.rho > bound) {
      std::ostringstream msg;
      msg << "rho = " << cfg.rho << " exceeds the convergence bound " << bound << " for ADMM_SC";
      result.warnings.push_back(msg.str());
    }
  }

  GlobalModel w{cfg.w0.size() ? cfg.w0 : Vector::Zero(static_cast<Eigen::Index>(dim))};
  std::vector<Vector> mu(G, Vector::Constant(static_cast<Eigen::Index>(dim), cfg.mu0));
  std::vector<Vector> results(G);
  // Channel order is connection order; the client id comes from the messages.
  std::vector<std::optional<std::size_t>> channel_client(G);
  if (channels_in_client_order) {
    for (std::size_t g = 0; g < G; ++g) channel_client[g] = g;
  }

  auto abort_all = [&](const Abort& a) -> FederationError {
    for (const auto& ch : channels) ch->close();
    return FederationError(a.client, a.message);
  };
  auto describe = [&](std::size_t channel) {
    return channel_client[channel] ? "client " + std::to_string(*channel_client[channel])
                                   : "client on channel " + std::to_string(channel);
  };

  result.best_model = w;
  double best_objective = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    const auto start = Clock::now();
    std::size_t channel = 0;
    try {
      for (channel = 0; channel < G; ++channel) channels[channel]->send(wire::RoundStart{t, w.w});
      for (auto& r : results) r.resize(0);
      for (channel = 0; channel < G; ++channel) {
        const wire::Message msg = channels[channel]->receive();
        std::size_t g = G;
        const Vector* payload = nullptr;
        if (!admm && std::holds_alternative<wire::SmResult>(msg)) {
          g = std::get<wire::SmResult>(msg).g;
          payload = &std::get<wire::SmResult>(msg).v;
        } else if (admm && std::holds_alternative<wire::AdmmResult>(msg)) {
          g = std::get<wire::AdmmResult>(msg).g;
          payload = &std::get<wire::AdmmResult>(msg).w;
        } else {
          throw abort_all({channel_client[channel], describe(channel) + " sent unexpected " +
                                                        wire::message_name(msg) + " in round " + std::to_string(t)});
        }
        if (g >= G) throw abort_all({std::nullopt, describe(channel) + " reported out-of-range id " + std::to_string(g)});
        if (channel_client[channel] && *channel_client[channel] != g) {
          throw abort_all({g, describe(channel) + " changed its id to " + std::to_string(g)});
        }
        if (results[g].size() != 0) throw abort_all({g, "duplicate result from client " + std::to_string(g)});
        if (static_cast<std::size_t>(payload->size()) != dim) {
          throw abort_all({g, "client " + std::to_string(g) + " sent a vector of length " + std::to_string(payload->size())});
        }
        channel_client[channel] = g;
        results[g] = *payload;
      }
    } catch (const transport::ChannelClosed& e) {
      throw abort_all({channel_client[channel], describe(channel) + " failed in round " + std::to_string(t) + ": " + e.what()});
    } catch (const wire::ProtocolError& e) {
      throw abort_all({channel_client[channel], describe(channel) + " sent a malformed frame in round " +
                                                    std::to_string(t) + ": " + e.what()});
    }

    RoundTrace trace;
    trace.t = t;
    if (admm) {
      w = admm_server_update(alphas, results, mu);
      for (std::size_t g = 0; g < G; ++g) {
        mu[g] += results[g] - w.w;
        trace.consensus_residual = std::max(trace.consensus_residual, (results[g] - w.w).norm());
      }
    } else {
      w = sm_server_update(w, alphas, results, t, cfg.gamma0);
    }
    try {
      for (channel = 0; channel < G; ++channel) channels[channel]->send(wire::Broadcast{t, w.w});
    } catch (const transport::ChannelClosed& e) {
      throw abort_all({channel_client[channel], describe(channel) + " failed in round " + std::to_string(t) + ": " + e.what()});
    }

    trace.w_after = w;
    trace.global_objective = client_data.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                 : global_objective(w, client_data, effective);
    trace.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
    if (!(trace.global_objective >= best_objective)) {
      // NaN objectives (no data on the server) fall through to the last iterate
      best_objective = std::isnan(trace.global_objective) ? best_objective : trace.global_objective;
      result.best_model = w;
      result.best_round = t;
    }
    result.trace.push_back(std::move(trace));
  }

  for (const auto& ch : channels) {
    try {
      ch->send(wire::Shutdown{});
    } catch (const transport::ChannelClosed&) {
      // a client that already left needs no shutdown
    }
  }
  result.final_model = w;
  return result;
}

void run_client(Channel& channel, const DatasetView& data, const ClientRuntime& rt) {
  const auto dim = static_cast<Eigen::Index>(data.dim());
  ClientModel model{Vector::Zero(dim), Vector::Constant(dim, rt.mu0)};
  const auto id = static_cast<std::uint32_t>(rt.id);
  try {
    while (true) {
      const wire::Message msg = channel.receive();
      if (std::holds_alternative<wire::Shutdown>(msg)) return;
      if (const auto* start = std::get_if<wire::RoundStart>(&msg)) {
        const GlobalModel w{start->w};
        if (rt.algorithm == Algorithm::SM) {
          const auto step = sm_client_step(w, data, rt.cfg, rt.solver, rt.id);
          channel.send(wire::SmResult{id, step.subgradient});
        } else {
          model = admm_client_step(w, model, data, rt.cfg, rt.solver, rt.id);
          channel.send(wire::AdmmResult{id, model.w});
        }
      } else if (const auto* bc = std::get_if<wire::Broadcast>(&msg)) {
        if (rt.algorithm != Algorithm::SM) model = admm_multiplier_update(model, GlobalModel{bc->w});
      } else {
        throw wire::ProtocolError(std::string("client received unexpected ") + wire::message_name(msg));
      }
    }
  } catch (...) {
    channel.close();
    throw;
  }
}

FederationResult run_federation(const FederationConfig& cfg, std::span<const DatasetView> client_data,
                                TransportKind kind) {
  if (client_data.size() != cfg.num_clients()) throw std::invalid_argument("run_federation: one dataset per client required");
  const std::size_t dim = client_data.empty() ? 0 : client_data[0].dim();
  for (const auto& d : client_data) {
    if (d.dim() != dim) throw std::invalid_argument("run_federation: clients disagree on the feature dimension");
    if (d.empty()) throw std::invalid_argument("run_federation: every client needs at least one sample");
  }
  cfg.validate(dim);
  const std::size_t G = cfg.num_clients();

  std::mutex error_mu;
  std::vector<std::string> client_errors(G);
  auto client_body = [&](std::size_t g, Channel& channel) {
    try {
      run_client(channel, client_data[g], {g, cfg.algorithm, cfg.effective_client(g), cfg.solver, cfg.mu0});
    } catch (const std::exception& e) {
      std::lock_guard lock(error_mu);
      client_errors[g] = e.what();
    }
  };

  std::vector<std::unique_ptr<Channel>> server_ends;
  std::vector<std::unique_ptr<Channel>> client_ends(G);
  std::vector<std::jthread> workers;
  workers.reserve(G);

  if (kind == TransportKind::InProcess) {
    for (std::size_t g = 0; g < G; ++g) {
      auto pair = transport::make_inprocess_pair();
      server_ends.push_back(std::move(pair.server_end));
      client_ends[g] = std::move(pair.client_end);
    }
    for (std::size_t g = 0; g < G; ++g) workers.emplace_back([&, g] { client_body(g, *client_ends[g]); });
  } else {
    transport::TcpListener listener("127.0.0.1", 0);
    const auto port = listener.port();
    for (std::size_t g = 0; g < G; ++g) {
      workers.emplace_back([&, g, port] {
        try {
          client_ends[g] = transport::tcp_connect("127.0.0.1", port);
        } catch (const std::exception& e) {
          std::lock_guard lock(error_mu);
          client_errors[g] = e.what();
          return;
        }
        client_body(g, *client_ends[g]);
      });
    }
    for (std::size_t g = 0; g < G; ++g) server_ends.push_back(listener.accept(30000));
  }

  auto join = [&] {
    for (auto& w : workers) {
      if (w.joinable()) w.join();
    }
  };
  try {
    auto result = run_server(cfg, server_ends, client_data, dim, kind == TransportKind::InProcess);
    join();
    return result;
  } catch (const FederationError& e) {
    for (const auto& ch : server_ends) ch->close();
    join();
    std::string what = e.what();
    if (e.client() && !client_errors[*e.client()].empty()) what += " (" + client_errors[*e.client()] + ")";
    for (std::size_t g = 0; g < G && !e.client(); ++g) {
      if (!client_errors[g].empty()) what += " (client " + std::to_string(g) + ": " + client_errors[g] + ")";
    }
    throw FederationError(e.client(), what);
  } catch (...) {
    for (const auto& ch : server_ends) ch->close();
    join();
    throw;
  }
}

}  // namespace fdrsvm::fed
