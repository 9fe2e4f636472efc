#include <doctest.h>

#include "fdrsvm/federation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

using namespace fdrsvm;
using namespace fdrsvm::fed;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Two overlapping Gaussian blobs clipped to the unit box, plus a bias column.
DatasetView blobs(std::mt19937_64& rng, int count, double shift = 0.0) {
  std::normal_distribution<double> gauss(0.0, 0.15);
  std::vector<LabeledSample> samples;
  for (int n = 0; n < count; ++n) {
    const int y = n % 2 ? 1 : -1;
    const double center = 0.5 + 0.15 * y + shift;
    Vector x(3);
    x[0] = std::clamp(center + gauss(rng), 0.0, 1.0);
    x[1] = std::clamp(center + gauss(rng), 0.0, 1.0);
    x[2] = 1.0;
    samples.push_back({x, y});
  }
  return DatasetView(std::move(samples), 3);
}

FederationConfig base_config(Algorithm algorithm, std::size_t clients, std::size_t rounds) {
  FederationConfig cfg;
  cfg.algorithm = algorithm;
  cfg.rounds = rounds;
  for (std::size_t g = 0; g < clients; ++g) {
    ClientConfig c;
    c.alpha = 1.0 / static_cast<double>(clients);
    c.epsilon = 0.02;
    c.kappa = 1.0;
    c.norm = algorithm == Algorithm::SM ? NormKind::LInf : NormKind::L1;
    cfg.clients.push_back(c);
  }
  // keep the weights summing to exactly one
  double rest = 1.0;
  for (std::size_t g = 0; g + 1 < clients; ++g) rest -= cfg.clients[g].alpha;
  cfg.clients.back().alpha = rest;
  return cfg;
}

// Pooled DR-SVM optimum: the ADMM subproblem with no proximal term.
double central_optimum(const DatasetView& data, const ClientConfig& c) {
  ClientConfig lp_cfg = c;
  lp_cfg.rho = 0.0;
  lp_cfg.tau = 0.0;
  const auto dim = static_cast<Eigen::Index>(data.dim());
  const auto sol = solver::solve(build_admm_qp(GlobalModel::zeros(data.dim()), ClientModel{Vector::Zero(dim), Vector::Zero(dim)}, data, lp_cfg));
  REQUIRE(sol.optimal());
  return sol.objective;
}

}  // namespace

TEST_CASE("wire codec round trips every message") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> gauss(0.0, 1e6);
  for (int trial = 0; trial < 200; ++trial) {
    Vector v(trial % 9);
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = gauss(rng);
    const std::uint64_t t = rng();
    const auto g = static_cast<std::uint32_t>(rng());
    const std::vector<wire::Message> messages{wire::RoundStart{t, v}, wire::SmResult{g, v}, wire::AdmmResult{g, v},
                                              wire::Broadcast{t, v}, wire::Shutdown{}};
    for (const auto& msg : messages) {
      const auto frame = wire::encode_frame(msg);
      const auto back = wire::decode_payload(std::span(frame).subspan(4));
      REQUIRE(back.index() == msg.index());
      CHECK(wire::encode_frame(back) == frame);
    }
  }
}

TEST_CASE("wire codec rejects malformed input") {
  const auto frame = wire::encode_frame(wire::SmResult{3, vec({1.0, 2.0})});
  const std::span<const std::uint8_t> payload = std::span(frame).subspan(4);
  CHECK_THROWS_AS(wire::decode_payload(payload.first(payload.size() - 1)), wire::ProtocolError);
  std::vector<std::uint8_t> trailing(payload.begin(), payload.end());
  trailing.push_back(0);
  CHECK_THROWS_AS(wire::decode_payload(trailing), wire::ProtocolError);
  std::vector<std::uint8_t> bad_tag(payload.begin(), payload.end());
  bad_tag[0] = 99;
  CHECK_THROWS_AS(wire::decode_payload(bad_tag), wire::ProtocolError);
  std::vector<std::uint8_t> nan_value(payload.begin(), payload.end());
  // exponent all ones, nonzero mantissa
  std::fill(nan_value.end() - 8, nan_value.end(), 0xFF);
  CHECK_THROWS_AS(wire::decode_payload(nan_value), wire::ProtocolError);
  CHECK_THROWS_AS(wire::encode_frame(wire::Broadcast{1, vec({std::nan("")})}), wire::ProtocolError);
}

TEST_CASE("frame cap") {
  const auto frame = wire::encode_frame(wire::Broadcast{1, Vector::Zero(100)});
  CHECK_THROWS_AS(wire::encode_frame(wire::Broadcast{1, Vector::Zero(100)}, 64), wire::ProtocolError);
  const std::uint8_t huge[4] = {0x7F, 0xFF, 0xFF, 0xFF};
  CHECK_THROWS_AS(wire::decode_length(std::span<const std::uint8_t, 4>(huge, 4)), wire::ProtocolError);
  CHECK(wire::decode_length(std::span<const std::uint8_t, 4>(frame.data(), 4)) == frame.size() - 4);

  SUBCASE("oversized frame over TCP") {
    transport::TcpListener listener("127.0.0.1", 0, 1 << 20);
    std::thread sender([port = listener.port()] {
      auto ch = transport::tcp_connect("127.0.0.1", port, 5000, 1 << 24);
      ch->send(wire::Broadcast{1, Vector::Zero(200000)});  // 1.6 MB payload
    });
    auto server = listener.accept(5000);
    CHECK_THROWS_AS(server->receive(), wire::ProtocolError);
    sender.join();
  }
}

TEST_CASE("in-process channel delivers in order and reports closure") {
  auto pair = transport::make_inprocess_pair();
  pair.server_end->send(wire::RoundStart{1, vec({1.0})});
  pair.server_end->send(wire::Shutdown{});
  CHECK(std::holds_alternative<wire::RoundStart>(pair.client_end->receive()));
  CHECK(std::holds_alternative<wire::Shutdown>(pair.client_end->receive()));
  pair.client_end->close();
  CHECK_THROWS_AS(pair.server_end->receive(), transport::ChannelClosed);
  CHECK_THROWS_AS(pair.server_end->send(wire::Shutdown{}), transport::ChannelClosed);
}

TEST_CASE("server update rules") {
  const std::vector<double> alphas{1.0};
  SUBCASE("SM step") {
    const std::vector<Vector> v{vec({1.0, 0.0})};
    const auto w = sm_server_update(GlobalModel{vec({0.0, 0.0})}, alphas, v, 2, 1.0);
    CHECK(w.w.isApprox(vec({-0.5, 0.0})));
    const std::vector<Vector> zero{vec({0.0, 0.0})};
    CHECK(sm_server_update(GlobalModel{vec({3.0, 4.0})}, alphas, zero, 7, 2.0).w == vec({3.0, 4.0}));
    CHECK_THROWS_AS(sm_server_update(GlobalModel{vec({0.0, 0.0})}, std::vector<double>{0.5, 0.5}, v, 1, 1.0), FederationError);
  }
  SUBCASE("ADMM average") {
    const std::vector<double> half{0.5, 0.5};
    const std::vector<Vector> w{vec({1.0, 0.0}), vec({0.0, 1.0})};
    const std::vector<Vector> zero{vec({0.0, 0.0}), vec({0.0, 0.0})};
    CHECK(admm_server_update(half, w, zero).w.isApprox(vec({0.5, 0.5})));
    const std::vector<Vector> same{vec({2.0, -1.0}), vec({2.0, -1.0})};
    CHECK(admm_server_update(half, same, zero).w.isApprox(vec({2.0, -1.0})));
    const std::vector<Vector> mu{vec({0.2, 0.4}), vec({-0.6, 1.0})};
    const Vector diff = admm_server_update(half, w, mu).w - admm_server_update(half, w, zero).w;
    CHECK(diff.isApprox(0.5 * (mu[0] + mu[1])));
    CHECK_THROWS_AS(admm_server_update(half, std::vector<Vector>{vec({1.0, 0.0})}, zero), FederationError);
  }
}

TEST_CASE("rho upper bound") {
  CHECK(rho_upper_bound(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 1.0}) == doctest::Approx(0.5));
  const std::vector<double> alphas{0.2, 0.3, 0.5};
  const std::vector<double> taus{1.0, 2.0, 0.5};
  const std::vector<double> doubled{2.0, 4.0, 1.0};
  CHECK(rho_upper_bound(alphas, doubled) == doctest::Approx(2.0 * rho_upper_bound(alphas, taus)));
  // G = 3: min{4*0.2*1/(1*6), 4*0.3*2/(2*5), 4*0.5*0.5/(2*5)} = min{0.1333, 0.24, 0.1}
  CHECK(rho_upper_bound(alphas, taus) == doctest::Approx(0.1));
  CHECK(rho_upper_bound(alphas, taus) > 0.0);
  CHECK_THROWS_AS(rho_upper_bound(std::vector<double>{1.0}, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("zero rounds returns the initial model") {
  std::mt19937_64 rng(2);
  const std::vector<DatasetView> data{blobs(rng, 10), blobs(rng, 10)};
  auto cfg = base_config(Algorithm::ADMM, 2, 0);
  cfg.w0 = vec({0.1, 0.2, 0.3});
  const auto result = run_federation(cfg, data);
  CHECK(result.trace.empty());
  CHECK(result.final_model.w == cfg.w0);
  CHECK(result.best_model.w == cfg.w0);
}

TEST_CASE("single-client ADMM reaches the central optimum") {
  std::mt19937_64 rng(3);
  const std::vector<DatasetView> data{blobs(rng, 40)};
  auto cfg = base_config(Algorithm::ADMM, 1, 300);
  cfg.rho = 1.0;
  const auto result = run_federation(cfg, data);
  const double target = central_optimum(data[0], cfg.clients[0]);
  const double reached = result.trace.back().global_objective;
  INFO("target " << target << " reached " << reached);
  CHECK(std::abs(reached - target) <= 1e-3 * std::abs(target));
  CHECK(result.trace.back().consensus_residual <= 1e-3);
}

TEST_CASE("strongly convex ADMM reaches consensus under the rho bound") {
  std::mt19937_64 rng(4);
  const std::vector<DatasetView> data{blobs(rng, 30, -0.05), blobs(rng, 30, 0.05)};
  auto cfg = base_config(Algorithm::ADMM_SC, 2, 100);
  const double rho0 = 0.05;
  for (auto& c : cfg.clients) c.tau = 18.0 * rho0;
  const double bound = rho_upper_bound(cfg.alphas(), std::vector<double>{cfg.clients[0].tau, cfg.clients[1].tau});
  cfg.rho = 0.9 * bound;
  const auto result = run_federation(cfg, data);
  CHECK(result.warnings.empty());
  REQUIRE(result.trace.size() == 100);
  CHECK(result.trace.back().consensus_residual <= 1e-4);

  cfg.rho = 2.0 * bound;
  cfg.rounds = 1;
  CHECK_FALSE(run_federation(cfg, data).warnings.empty());
}

TEST_CASE("TCP and in-process transports give identical runs") {
  std::mt19937_64 rng(5);
  const std::vector<DatasetView> data{blobs(rng, 12), blobs(rng, 14)};
  for (Algorithm algorithm : {Algorithm::SM, Algorithm::ADMM}) {
    auto cfg = base_config(algorithm, 2, 3);
    cfg.gamma0 = 0.5;
    const auto local = run_federation(cfg, data, TransportKind::InProcess);
    const auto remote = run_federation(cfg, data, TransportKind::Tcp);
    REQUIRE(local.trace.size() == remote.trace.size());
    for (std::size_t t = 0; t < local.trace.size(); ++t) {
      CHECK(local.trace[t].w_after.w == remote.trace[t].w_after.w);
    }
    CHECK(local.final_model.w == remote.final_model.w);
  }
}

TEST_CASE("a failing client aborts the run and is named") {
  std::mt19937_64 rng(6);
  std::vector<LabeledSample> outside{{vec({0.5, 1.5, 1.0}), 1}, {vec({0.2, 0.1, 1.0}), -1}};
  const std::vector<DatasetView> data{blobs(rng, 10), DatasetView(outside, 3), blobs(rng, 10)};
  auto cfg = base_config(Algorithm::SM, 3, 5);
  for (TransportKind kind : {TransportKind::InProcess, TransportKind::Tcp}) {
    try {
      run_federation(cfg, data, kind);
      FAIL("expected the federation to abort");
    } catch (const FederationError& e) {
      const std::string what = e.what();
      INFO(what);
      CHECK(what.find("client 1") != std::string::npos);
      CHECK(what.find("[0, 1]") != std::string::npos);
    }
  }
}

TEST_CASE("SM best objective never increases with more rounds") {
  std::mt19937_64 rng(7);
  const std::vector<DatasetView> data{blobs(rng, 15), blobs(rng, 15)};
  auto cfg = base_config(Algorithm::SM, 2, 25);
  cfg.gamma0 = 1.0;
  const auto result = run_federation(cfg, data);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& tr : result.trace) {
    const double next = std::min(best, tr.global_objective);
    CHECK(next <= best);
    best = next;
  }
  CHECK(global_objective(result.best_model, data, cfg.clients) == doctest::Approx(best));
  CHECK(best < global_objective(GlobalModel::zeros(3), data, cfg.clients));
}

TEST_CASE("global objective does not depend on client order") {
  std::mt19937_64 rng(8);
  std::vector<DatasetView> data{blobs(rng, 9), blobs(rng, 11), blobs(rng, 13), blobs(rng, 7)};
  auto cfg = base_config(Algorithm::ADMM, 4, 1);
  cfg.clients[0].alpha = 0.1;
  cfg.clients[1].alpha = 0.2;
  cfg.clients[2].alpha = 0.3;
  cfg.clients[3].alpha = 0.4;
  cfg.clients[2].epsilon = 0.1;
  const GlobalModel w{vec({0.7, -0.4, 0.1})};
  const double base = global_objective(w, data, cfg.clients);
  std::vector<std::size_t> order{0, 1, 2, 3};
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<DatasetView> d;
    std::vector<ClientConfig> c;
    for (std::size_t g : order) {
      d.push_back(data[g]);
      c.push_back(cfg.clients[g]);
    }
    CHECK(std::abs(global_objective(w, d, c) - base) <= 1e-12);
  }
}

TEST_CASE("configuration validation") {
  std::mt19937_64 rng(9);
  const std::vector<DatasetView> data{blobs(rng, 10), blobs(rng, 10)};
  auto cfg = base_config(Algorithm::ADMM, 2, 1);
  cfg.clients[0].alpha = 0.7;
  CHECK_THROWS_AS(run_federation(cfg, data), std::invalid_argument);
  cfg = base_config(Algorithm::ADMM_SC, 2, 1);
  CHECK_THROWS_AS(run_federation(cfg, data), std::invalid_argument);  // tau = 0
  cfg = base_config(Algorithm::ADMM, 2, 1);
  cfg.w0 = vec({1.0});
  CHECK_THROWS_AS(run_federation(cfg, data), std::invalid_argument);
  CHECK(parse_algorithm("ADMM-SC") == Algorithm::ADMM_SC);
  CHECK_THROWS(parse_algorithm("admm"));
}
