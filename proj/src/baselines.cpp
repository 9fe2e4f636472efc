#include "fdrsvm/baselines.hpp"

#include "fdrsvm/client.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace fdrsvm::baselines {

CentralDrResult train_central_dr_svm(const DatasetView& data, const CentralDrConfig& cfg,
                                     const solver::SolverConfig& solver_cfg) {
  if (data.empty()) throw std::invalid_argument("train_central_dr_svm: empty dataset");
  if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("train_central_dr_svm: epsilon must be positive");
  if (!(cfg.kappa >= 0.0)) throw std::invalid_argument("train_central_dr_svm: kappa must be nonnegative");
  // The ADMM client subproblem without its proximal term is exactly the
  // pooled LP.
  ClientConfig lp;
  lp.epsilon = cfg.epsilon;
  lp.kappa = cfg.kappa;
  lp.norm = cfg.norm;
  lp.rho = 0.0;
  lp.tau = 0.0;
  const auto dim = static_cast<Eigen::Index>(data.dim());
  const auto program =
      build_admm_qp(GlobalModel::zeros(data.dim()), ClientModel{Vector::Zero(dim), Vector::Zero(dim)}, data, lp);
  const auto sol = solver::solve(program, solver_cfg);
  if (sol.status == solver::SolverStatus::NumericalFailure) {
    throw std::runtime_error("train_central_dr_svm: " + sol.diagnostics);
  }
  return {GlobalModel{sol.x_star.head(dim)}, sol.objective, sol.status};
}

std::string_view to_string(FedVariant v) {
  switch (v) {
    case FedVariant::FedSGD:
      return "FedSGD";
    case FedVariant::FedAvg:
      return "FedAvg";
    case FedVariant::FedProx:
      return "FedProx";
  }
  return "?";
}

FedVariant parse_fed_variant(std::string_view text) {
  if (text == "FedSGD") return FedVariant::FedSGD;
  if (text == "FedAvg") return FedVariant::FedAvg;
  if (text == "FedProx") return FedVariant::FedProx;
  throw std::invalid_argument("unknown federated baseline '" + std::string(text) + "'");
}

void FedBaselineConfig::validate(std::size_t clients) const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("FedBaselineConfig: " + what); };
  if (clients == 0) fail("at least one client is required");
  if (!(gamma0 > 0.0)) fail("gamma0 must be positive");
  if (local_epochs == 0) fail("local_epochs must be positive");
  if (!(batch_fraction > 0.0 && batch_fraction <= 1.0)) fail("batch_fraction must lie in (0, 1]");
  if (!(prox_mu >= 0.0)) fail("prox_mu must be nonnegative");
  if (!alphas.empty()) {
    if (alphas.size() != clients) fail("one weight per client required");
    const double sum = std::accumulate(alphas.begin(), alphas.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-12) fail("weights must sum to 1");
  }
}

double l2_penalty(std::size_t client_size) { return 1.0 / (10.0 * static_cast<double>(client_size)); }

std::vector<double> equal_weights(std::size_t clients) {
  std::vector<double> w(clients, 1.0 / static_cast<double>(clients));
  if (clients > 0) w.back() = 1.0 - 1.0 / static_cast<double>(clients) * static_cast<double>(clients - 1);
  return w;
}

double fed_l2_objective(const Vector& w, std::span<const DatasetView> client_data, std::span<const double> alphas) {
  double total = 0.0;
  for (std::size_t g = 0; g < client_data.size(); ++g) {
    total += alphas[g] * (empirical_risk(w, client_data[g]) + l2_penalty(client_data[g].size()) * w.squaredNorm());
  }
  return total;
}

namespace {

// Mean hinge subgradient over the given samples, summed in index order.
Vector hinge_subgradient(const Vector& w, const DatasetView& data, std::span<const std::size_t> batch) {
  Vector g = Vector::Zero(w.size());
  for (std::size_t i : batch) {
    const auto& s = data[i];
    if (1.0 - s.y * w.dot(s.x) > 0.0) g.noalias() -= s.y * s.x;
  }
  return g / static_cast<double>(batch.size());
}

Vector local_update(const Vector& w_round, const DatasetView& data, const FedBaselineConfig& cfg, double step,
                    std::mt19937_64& rng) {
  const std::size_t count = data.size();
  const double c = l2_penalty(count);
  const bool full = cfg.variant == FedVariant::FedSGD;
  const std::size_t epochs = full ? 1 : cfg.local_epochs;
  const std::size_t batch = full ? count
                                  : std::clamp<std::size_t>(
                                        static_cast<std::size_t>(std::llround(cfg.batch_fraction * static_cast<double>(count))),
                                        1, count);
  const double prox = cfg.variant == FedVariant::FedProx ? cfg.prox_mu : 0.0;

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  Vector w = w_round;
  for (std::size_t e = 0; e < epochs; ++e) {
    if (batch < count) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < count; start += batch) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(count, start + batch)));
      std::sort(idx.begin(), idx.end());
      Vector grad = hinge_subgradient(w, data, idx) + 2.0 * c * w;
      if (prox > 0.0) grad += prox * (w - w_round);
      w -= step * grad;
    }
  }
  return w;
}

}  // namespace

FedBaselineResult train_fed_l2_svm(std::span<const DatasetView> client_data, const FedBaselineConfig& cfg,
                                   std::uint64_t seed) {
  cfg.validate(client_data.size());
  const std::size_t G = client_data.size();
  const std::size_t dim = client_data[0].dim();
  for (const auto& d : client_data) {
    if (d.empty()) throw std::invalid_argument("train_fed_l2_svm: every client needs data");
    if (d.dim() != dim) throw std::invalid_argument("train_fed_l2_svm: clients disagree on the feature dimension");
  }
  const auto alphas = cfg.alphas.empty() ? equal_weights(G) : cfg.alphas;

  std::vector<std::mt19937_64> rngs;
  for (std::size_t g = 0; g < G; ++g) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(g)};
    rngs.emplace_back(seq);
  }

  FedBaselineResult out;
  Vector w = Vector::Zero(static_cast<Eigen::Index>(dim));
  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    const double step = cfg.gamma0 / static_cast<double>(t);
    Vector next = Vector::Zero(w.size());
    for (std::size_t g = 0; g < G; ++g) next += alphas[g] * local_update(w, client_data[g], cfg, step, rngs[g]);
    w = std::move(next);
    out.trace.push_back(GlobalModel{w});
    out.objective.push_back(fed_l2_objective(w, client_data, alphas));
  }
  out.final_model = GlobalModel{w};
  return out;
}

}  // namespace fdrsvm::baselines
