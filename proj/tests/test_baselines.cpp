#include <doctest.h>

#include "fdrsvm/baselines.hpp"
#include "fdrsvm/client.hpp"

#include <random>

using namespace fdrsvm;
using namespace fdrsvm::baselines;

namespace {

// Two well separated clusters in the unit box with a bias column.
DatasetView clusters(std::mt19937_64& rng, int count, double spread = 0.08) {
  std::normal_distribution<double> gauss(0.0, spread);
  std::vector<LabeledSample> samples;
  for (int n = 0; n < count; ++n) {
    const int y = n % 2 ? 1 : -1;
    const double center = y > 0 ? 0.75 : 0.25;
    Vector x(3);
    x << std::clamp(center + gauss(rng), 0.0, 1.0), std::clamp(center + gauss(rng), 0.0, 1.0), 1.0;
    samples.push_back({x, y});
  }
  return DatasetView(std::move(samples), 3);
}

ClientConfig as_client(const CentralDrConfig& c) {
  ClientConfig out;
  out.epsilon = c.epsilon;
  out.kappa = c.kappa;
  out.norm = c.norm;
  return out;
}

}  // namespace

TEST_CASE("central DR-SVM optimum matches the dual risk of its solution") {
  std::mt19937_64 rng(1);
  for (NormKind norm : {NormKind::L1, NormKind::LInf}) {
    for (double eps : {1e-3, 1e-2, 1e-1}) {
      const auto data = clusters(rng, 40, 0.2);
      const CentralDrConfig cfg{eps, 0.5, norm};
      const auto result = train_central_dr_svm(data, cfg);
      CHECK(result.objective == doctest::Approx(worst_case_risk_dual(result.model, data, as_client(cfg))).epsilon(1e-6));
    }
  }
}

TEST_CASE("central DR-SVM optimum is a lower bound under perturbation") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> gauss;
  const auto data = clusters(rng, 30, 0.25);
  const CentralDrConfig cfg{0.05, 1.0, NormKind::L1};
  const auto result = train_central_dr_svm(data, cfg);
  for (int k = 0; k < 200; ++k) {
    Vector w = result.model.w;
    for (Eigen::Index p = 0; p < w.size(); ++p) w[p] += 0.5 * gauss(rng);
    CHECK(worst_case_risk_dual(GlobalModel{w}, data, as_client(cfg)) >= result.objective - 1e-7);
  }
}

TEST_CASE("central DR-SVM limits") {
  std::mt19937_64 rng(3);
  const auto data = clusters(rng, 30);
  SUBCASE("huge radius gives the zero model") {
    const auto result = train_central_dr_svm(data, {1e3, 1.0, NormKind::L1});
    CHECK(result.model.w.norm() <= 1e-4);
  }
  SUBCASE("separable data with a tiny radius is fit exactly") {
    const auto result = train_central_dr_svm(data, {1e-5, 1.0, NormKind::L1});
    CHECK(evaluate(result.model, data).f1 == doctest::Approx(1.0));
  }
}

TEST_CASE("FedSGD with one client is plain subgradient descent") {
  std::mt19937_64 rng(4);
  const std::vector<DatasetView> data{clusters(rng, 25, 0.2)};
  FedBaselineConfig cfg;
  cfg.variant = FedVariant::FedSGD;
  cfg.gamma0 = 0.5;
  cfg.rounds = 30;
  const auto result = train_fed_l2_svm(data, cfg, 11);

  const double c = 1.0 / (10.0 * 25.0);
  Vector w = Vector::Zero(3);
  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    Vector g = Vector::Zero(3);
    for (const auto& s : data[0]) {
      if (1.0 - s.y * w.dot(s.x) > 0.0) g -= s.y * s.x;
    }
    g = g / 25.0 + 2.0 * c * w;
    w = w - (cfg.gamma0 / static_cast<double>(t)) * g;
    CHECK(result.trace[t - 1].w.isApprox(w, 1e-14));
  }
}

TEST_CASE("degenerate configurations coincide") {
  std::mt19937_64 rng(5);
  const std::vector<DatasetView> data{clusters(rng, 20, 0.2), clusters(rng, 30, 0.2), clusters(rng, 25, 0.2)};
  FedBaselineConfig avg;
  avg.variant = FedVariant::FedAvg;
  avg.rounds = 15;
  avg.gamma0 = 0.3;

  SUBCASE("FedProx without the proximal term is FedAvg") {
    FedBaselineConfig prox = avg;
    prox.variant = FedVariant::FedProx;
    prox.prox_mu = 0.0;
    const auto a = train_fed_l2_svm(data, avg, 99);
    const auto b = train_fed_l2_svm(data, prox, 99);
    for (std::size_t t = 0; t < a.trace.size(); ++t) CHECK(a.trace[t].w == b.trace[t].w);
  }
  SUBCASE("FedAvg with one full-batch epoch is FedSGD") {
    FedBaselineConfig one = avg;
    one.local_epochs = 1;
    one.batch_fraction = 1.0;
    FedBaselineConfig sgd = avg;
    sgd.variant = FedVariant::FedSGD;
    const auto a = train_fed_l2_svm(data, one, 3);
    const auto b = train_fed_l2_svm(data, sgd, 4);
    for (std::size_t t = 0; t < a.trace.size(); ++t) CHECK(a.trace[t].w == b.trace[t].w);
  }
  SUBCASE("same seed, same run") {
    const auto a = train_fed_l2_svm(data, avg, 5);
    const auto b = train_fed_l2_svm(data, avg, 5);
    CHECK(a.final_model.w == b.final_model.w);
  }
}

// Clusters symmetric about the origin: FedSGD's harmonic steps need about
// 1000 rounds to grow a bias weight, beyond the tuned T grid.
DatasetView centered_clusters(std::mt19937_64& rng, int count) {
  std::normal_distribution<double> gauss(0.0, 0.08);
  std::vector<LabeledSample> samples;
  for (int n = 0; n < count; ++n) {
    const int y = n % 2 ? 1 : -1;
    Vector x(2);
    x << 0.25 * y + gauss(rng), 0.25 * y + gauss(rng);
    samples.push_back({x, y});
  }
  return DatasetView(std::move(samples), 2);
}

TEST_CASE("federated baselines separate separable data after tuning") {
  std::mt19937_64 rng(6);
  std::vector<DatasetView> data;
  for (int g = 0; g < 4; ++g) data.push_back(centered_clusters(rng, 50));
  std::vector<LabeledSample> pooled;
  for (const auto& d : data) pooled.insert(pooled.end(), d.begin(), d.end());
  const DatasetView train(pooled, 2);
  const auto test = centered_clusters(rng, 200);
  for (FedVariant v : {FedVariant::FedSGD, FedVariant::FedAvg, FedVariant::FedProx}) {
    // pick gamma0 and T on training F1, one run per gamma0 snapshotted at each T
    double best_f1 = -1.0;
    GlobalModel best;
    for (double gamma0 : {1e-3, 1e-2, 1e-1, 1.0}) {
      FedBaselineConfig cfg;
      cfg.variant = v;
      cfg.gamma0 = gamma0;
      cfg.rounds = 220;
      const auto result = train_fed_l2_svm(data, cfg, 7);
      for (std::size_t T : {5, 10, 20, 60, 100, 140, 180, 220}) {
        const double f1 = evaluate(result.trace[T - 1], train).f1;
        if (f1 > best_f1) {
          best_f1 = f1;
          best = result.trace[T - 1];
        }
      }
    }
    INFO(to_string(v));
    CHECK(evaluate(best, test).f1 >= 0.95);
  }
}

TEST_CASE("baseline configuration validation") {
  FedBaselineConfig cfg;
  cfg.batch_fraction = 0.0;
  CHECK_THROWS_AS(cfg.validate(2), std::invalid_argument);
  cfg = {};
  cfg.alphas = {0.5, 0.6};
  CHECK_THROWS_AS(cfg.validate(2), std::invalid_argument);
  CHECK(parse_fed_variant("FedProx") == FedVariant::FedProx);
  CHECK_THROWS(parse_fed_variant("fedavg"));
  const auto w = equal_weights(3);
  CHECK(w[0] + w[1] + w[2] == 1.0);
}
