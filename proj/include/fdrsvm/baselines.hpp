// Comparison models: the pooled distributionally robust SVM and the FedSGD /
// FedAvg / FedProx family for the l2-regularized hinge SVM.

#pragma once

#include "fdrsvm/core.hpp"
#include "fdrsvm/solver.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace fdrsvm::baselines {

struct CentralDrConfig {
  double epsilon = 0.01;
  double kappa = 1.0;
  NormKind norm = NormKind::L1;
};

struct CentralDrResult {
  GlobalModel model;
  double objective = 0.0;  // optimal worst-case risk
  solver::SolverStatus status = solver::SolverStatus::Optimal;
};

/// Throws std::runtime_error when the solver fails.
CentralDrResult train_central_dr_svm(const DatasetView& data, const CentralDrConfig& cfg,
                                     const solver::SolverConfig& solver_cfg = {});

enum class FedVariant { FedSGD, FedAvg, FedProx };

std::string_view to_string(FedVariant v);
FedVariant parse_fed_variant(std::string_view text);

struct FedBaselineConfig {
  FedVariant variant = FedVariant::FedAvg;
  double gamma0 = 0.1;  // step gamma0 / t in round t
  std::size_t rounds = 1;
  std::size_t local_epochs = 5;
  double batch_fraction = 0.2;
  double prox_mu = 1.0;  // FedProx only
  std::vector<double> alphas;  // empty means equal weights

  void validate(std::size_t clients) const;
};

struct FedBaselineResult {
  GlobalModel final_model;
  std::vector<GlobalModel> trace;  // model after each round
  std::vector<double> objective;   // sum_g alpha_g (mean hinge + c_g ||w||^2) per round
};

/// l2 penalty c_g = 1 / (10 N_g)
double l2_penalty(std::size_t client_size);

FedBaselineResult train_fed_l2_svm(std::span<const DatasetView> client_data, const FedBaselineConfig& cfg,
                                   std::uint64_t seed);

/// sum_g alpha_g * (mean hinge + c_g ||w||^2)
double fed_l2_objective(const Vector& w, std::span<const DatasetView> client_data, std::span<const double> alphas);

/// Equal weights that sum to exactly one.
std::vector<double> equal_weights(std::size_t clients);

}  // namespace fdrsvm::baselines
