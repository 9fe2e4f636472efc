// Experiment driver: declarative configuration, the per-repetition pipeline
// (split, normalize, partition, tune, train, evaluate), cross-validated grid
// search and result serialization.

#pragma once

#include "fdrsvm/core.hpp"
#include "fdrsvm/data.hpp"
#include "fdrsvm/federation.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fdrsvm::exp {

enum class Model { SM, ADMM, ADMM_SC, CentralDR, FedSGD, FedAvg, FedProx };

std::string_view to_string(Model model);
Model parse_model(std::string_view text);
bool is_federated_dr(Model model);  // SM, ADMM, ADMM_SC
bool is_fed_baseline(Model model);  // FedSGD, FedAvg, FedProx

/// Invalid or inconsistent configuration; the CLI maps it to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvSource {
  std::string path;
  data::CsvOptions options;
};

struct DatasetSource {
  std::optional<CsvSource> csv;  // synthetic when empty
  data::SyntheticSpec synthetic;  // seed is replaced by the repetition seed
  double train_fraction = 0.7;
  bool bias = true;  // append a constant feature after normalization
};

/// Lists of candidate values per knob. Only the knobs the model uses are
/// searched; the rest are ignored.
struct Grid {
  std::vector<double> rho;      // ADMM, ADMM_SC
  std::vector<double> gamma0;   // SM and the federated baselines
  std::vector<std::size_t> rounds;  // every federated model
  std::vector<double> epsilon;  // CentralDR
  std::vector<double> kappa;    // CentralDR
};

Grid default_grid(Model model);
std::size_t default_repetitions(Model model);

struct ExperimentConfig {
  DatasetSource dataset;
  data::PartitionPlan partition;  // seed is replaced by the repetition seed
  Model model = Model::ADMM;
  NormKind norm = NormKind::L1;
  double client_kappa = 1.0;   // label flip cost of every client
  double radius_beta = 10.0;   // client radius epsilon_g = 1 / (beta N_g)
  double tau_factor = 18.0;    // ADMM_SC uses tau_g = tau_factor * rho
  std::size_t local_epochs = 5;
  double batch_fraction = 0.2;
  double prox_mu = 1.0;
  Grid grid;
  bool cv = true;
  std::size_t folds = 5;
  std::size_t repetitions = 10;
  std::uint64_t base_seed = 0;
  std::string output;
  std::string source_text;  // verbatim configuration document, echoed in results

  /// Throws ConfigError.
  void validate() const;
};

/// Parses the JSON configuration document. Unknown keys are errors; missing
/// grids and repetition counts take the model's defaults. Throws ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

struct HyperParams {
  double rho = 0.0;
  double gamma0 = 0.0;
  std::size_t rounds = 0;
  double epsilon = 0.0;
  double kappa = 0.0;

  bool operator==(const HyperParams&) const = default;
};

/// Grid points in search order: the non-round knobs vary slowest, rounds
/// fastest, each in the order listed.
std::vector<HyperParams> expand_grid(const ExperimentConfig& cfg);

/// The data one repetition works on, all normalized with training bounds.
struct PreparedData {
  std::vector<DatasetView> clients;
  DatasetView test;
  data::MinMaxScaler scaler;
  data::PartitionResult partition_info;
};

PreparedData prepare_repetition(const ExperimentConfig& cfg, std::uint64_t seed);

/// Federation settings for the given client data and hyperparameters.
fed::FederationConfig federation_config(const ExperimentConfig& cfg, const HyperParams& hp,
                                        const std::vector<DatasetView>& clients);

struct RoundRecord {
  std::size_t t = 0;
  double objective = 0.0;    // NaN when not tracked
  double consensus = 0.0;    // NaN outside ADMM modes
  double wall_time = 0.0;    // seconds; NaN when not tracked

  bool operator==(const RoundRecord&) const;
};

struct TrainedModel {
  GlobalModel model;
  std::vector<RoundRecord> trace;
  std::vector<GlobalModel> snapshots;  // model after each round; one entry for CentralDR
  std::vector<std::string> warnings;
};

/// Trains the configured model once on the given clients. The seed drives
/// the minibatch order of the federated baselines.
TrainedModel train_model(const ExperimentConfig& cfg, const HyperParams& hp, const std::vector<DatasetView>& clients,
                         std::uint64_t seed);

struct CvOutcome {
  HyperParams chosen;
  double score = 0.0;               // mean validation F1 of the chosen point
  std::vector<double> grid_scores;  // one per expand_grid entry
  std::size_t fold_resamples = 0;   // fold assignments redrawn for a single-class fold
};

/// Exhaustive grid search by mean validation F1 over stratified folds of
/// every client; ties go to the smaller grid index. Only the given training
/// clients are touched.
CvOutcome cross_validate(const ExperimentConfig& cfg, const std::vector<DatasetView>& clients, std::uint64_t seed);

struct RepetitionResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  HyperParams chosen;
  double cv_score = 0.0;
  std::size_t fold_resamples = 0;
  double f1 = 0.0;
  double mccr = 0.0;
  double wall_time = 0.0;  // seconds, whole repetition
  std::vector<double> weights;
  std::vector<double> scale_lo, scale_hi;
  std::vector<RoundRecord> trace;
  std::vector<std::string> warnings;

  bool operator==(const RepetitionResult&) const;
};

struct Aggregate {
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;  // sample standard deviation (n - 1); 0 for one repetition
  double mean_mccr = 0.0;
  double std_mccr = 0.0;

  bool operator==(const Aggregate&) const;
};

struct RunResult {
  std::string config_text;
  std::string model;
  std::vector<RepetitionResult> repetitions;
  Aggregate aggregate;

  bool operator==(const RunResult&) const = default;
};

Aggregate summarize(const std::vector<RepetitionResult>& reps);

/// Runs every repetition with seed base_seed + i. A failing repetition is
/// recorded and the run continues.
RunResult run_experiment(const ExperimentConfig& cfg);

/// 0 when every repetition succeeded or at most 10% failed, 3 when more than
/// 10% failed, 2 when all failed.
int exit_code(const RunResult& result);

std::string to_json_text(const RunResult& result);
RunResult parse_result(const std::string& text);

/// Writes the JSON document to path and the per-round trace to
/// csv_path_for(path). Throws std::runtime_error when a file cannot be written.
void emit_results(const RunResult& result, const std::string& path);
std::string csv_path_for(const std::string& path);

/// Median wall time of one SM round over `runs` single-round federations on
/// synthetic data of n_total samples split evenly over `clients`.
double bench_sm_round(std::size_t n_total, std::size_t clients, std::size_t dim, std::size_t runs, std::uint64_t seed);

}  // namespace fdrsvm::exp
