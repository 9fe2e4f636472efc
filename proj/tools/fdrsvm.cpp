// fdrsvm: experiment runner and TCP server / client roles.

#include "fdrsvm/experiment.hpp"
#include "fdrsvm/transport.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

using namespace fdrsvm;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRunFailure = 2;

struct Overrides {
  std::optional<double> rho, gamma0;
  std::optional<std::size_t> rounds;

  void attach(CLI::App* app) {
    app->add_option("--rho", rho, "ADMM penalty (default: first grid value)");
    app->add_option("--gamma0", gamma0, "SM step scale (default: first grid value)");
    app->add_option("--rounds", rounds, "number of rounds (default: first grid value)");
  }

  exp::HyperParams apply(const exp::ExperimentConfig& cfg) const {
    auto hp = exp::expand_grid(cfg).front();
    if (rho) hp.rho = *rho;
    if (gamma0) hp.gamma0 = *gamma0;
    if (rounds) hp.rounds = *rounds;
    return hp;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json hyper_json(const exp::HyperParams& hp) {
  return {{"rho", hp.rho}, {"gamma0", hp.gamma0}, {"rounds", hp.rounds}, {"epsilon", hp.epsilon}, {"kappa", hp.kappa}};
}

void require_federated(const exp::ExperimentConfig& cfg) {
  if (!exp::is_federated_dr(cfg.model)) {
    throw exp::ConfigError("serve/client need model SM, ADMM or ADMM_SC, not " + std::string(exp::to_string(cfg.model)));
  }
}

int cmd_train(const std::string& config_path, const std::string& output, std::optional<std::size_t> reps) {
  auto cfg = exp::load_config(config_path);
  if (reps) cfg.repetitions = *reps;
  cfg.validate();
  const auto result = exp::run_experiment(cfg);
  const auto path = output.empty() ? cfg.output : output;
  if (path.empty()) {
    std::cout << exp::to_json_text(result) << '\n';
  } else {
    exp::emit_results(result, path);
  }
  const auto& a = result.aggregate;
  std::cerr << exp::to_string(cfg.model) << ": F1 " << a.mean_f1 << " +/- " << a.std_f1 << ", mCCR " << a.mean_mccr
            << " +/- " << a.std_mccr << " over " << a.succeeded << " repetitions (" << a.failed << " failed)\n";
  for (const auto& r : result.repetitions) {
    if (!r.ok) std::cerr << "repetition " << r.index << " (seed " << r.seed << ") failed: " << r.error << '\n';
  }
  return exp::exit_code(result);
}

int cmd_cv(const std::string& config_path, std::size_t rep) {
  const auto cfg = exp::load_config(config_path);
  const auto seed = cfg.base_seed + rep;
  const auto prepared = exp::prepare_repetition(cfg, seed);
  const auto cv = exp::cross_validate(cfg, prepared.clients, seed);
  const auto grid = exp::expand_grid(cfg);
  json scores = json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) scores.push_back({{"point", hyper_json(grid[i])}, {"f1", cv.grid_scores[i]}});
  json out{{"seed", seed}, {"chosen", hyper_json(cv.chosen)}, {"score", cv.score},
           {"fold_resamples", cv.fold_resamples}, {"grid", scores}};
  std::cout << out.dump(2) << '\n';
  return kOk;
}

int cmd_evaluate(const std::string& result_path, std::size_t rep, const std::string& csv, const data::CsvOptions& opts) {
  const auto result = exp::parse_result(read_file(result_path));
  if (rep >= result.repetitions.size()) throw std::runtime_error("repetition " + std::to_string(rep) + " not in result");
  const auto& r = result.repetitions[rep];
  if (!r.ok) throw std::runtime_error("repetition " + std::to_string(rep) + " failed: " + r.error);
  const auto to_vec = [](const std::vector<double>& v) { return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()))); };
  const auto scaler = data::MinMaxScaler::from_bounds(to_vec(r.scale_lo), to_vec(r.scale_hi));
  auto view = scaler.apply(data::load_csv(csv, opts).view());
  if (r.weights.size() == view.dim() + 1) view = data::with_bias(view);
  if (r.weights.size() != view.dim()) throw std::runtime_error("model and data dimensions differ");
  const auto m = evaluate(GlobalModel{to_vec(r.weights)}, view);
  json out{{"samples", view.size()}, {"f1", m.f1}, {"mccr", m.mccr},
           {"confusion", {{"tp", m.confusion.tp}, {"fp", m.confusion.fp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn}}}};
  std::cout << out.dump(2) << '\n';
  return kOk;
}

int cmd_bench(const std::vector<std::size_t>& sizes, const std::vector<std::size_t>& clients, std::size_t dim,
              std::size_t runs, std::uint64_t seed) {
  for (auto g : clients) {
    for (auto n : sizes) {
      const double t = exp::bench_sm_round(n, g, dim, runs, seed);
      std::cout << json{{"n", n}, {"clients", g}, {"dim", dim}, {"runs", runs}, {"median_round_seconds", t}}.dump() << '\n';
    }
  }
  return kOk;
}

int cmd_serve(const std::string& config_path, const std::string& host, std::uint16_t port, std::size_t rep,
              const Overrides& ov, int accept_timeout_ms) {
  const auto cfg = exp::load_config(config_path);
  require_federated(cfg);
  const auto prepared = exp::prepare_repetition(cfg, cfg.base_seed + rep);
  const auto hp = ov.apply(cfg);
  const auto fc = exp::federation_config(cfg, hp, prepared.clients);
  transport::TcpListener listener(host, port);
  std::cerr << "listening on " << host << ':' << listener.port() << " for " << fc.num_clients() << " clients\n";
  std::vector<std::unique_ptr<transport::Channel>> channels;
  while (channels.size() < fc.num_clients()) {
    auto ch = listener.accept(accept_timeout_ms);
    if (!ch) throw std::runtime_error("timed out waiting for clients");
    channels.push_back(std::move(ch));
  }
  const auto result = fed::run_server(fc, channels, prepared.clients, prepared.clients.front().dim());
  const auto m = evaluate(result.final_model, prepared.test);
  json trace = json::array();
  for (const auto& r : result.trace) {
    trace.push_back({{"t", r.t}, {"objective", r.global_objective}, {"consensus", r.consensus_residual}});
  }
  json out{{"hyperparameters", hyper_json(hp)},
           {"weights", std::vector<double>(result.final_model.w.begin(), result.final_model.w.end())},
           {"test_f1", m.f1},
           {"test_mccr", m.mccr},
           {"trace", trace},
           {"warnings", result.warnings}};
  std::cout << out.dump(2) << '\n';
  return kOk;
}

int cmd_client(const std::string& config_path, const std::string& host, std::uint16_t port, std::size_t id,
               std::size_t rep, const Overrides& ov) {
  const auto cfg = exp::load_config(config_path);
  require_federated(cfg);
  const auto prepared = exp::prepare_repetition(cfg, cfg.base_seed + rep);
  if (id >= prepared.clients.size()) throw exp::ConfigError("client id " + std::to_string(id) + " out of range");
  const auto fc = exp::federation_config(cfg, ov.apply(cfg), prepared.clients);
  auto channel = transport::tcp_connect(host, port);
  fed::run_client(*channel, prepared.clients[id], {id, fc.algorithm, fc.effective_client(id), fc.solver, fc.mu0});
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated distributionally robust SVM experiments"};
  app.require_subcommand(1);

  std::string config;
  std::string output;
  std::optional<std::size_t> reps;
  auto* train = app.add_subcommand("train", "run the configured experiment and write results");
  train->add_option("-c,--config", config, "experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("-o,--output", output, "result document path (overrides the config)");
  train->add_option("--repetitions", reps, "override the repetition count");

  std::size_t rep = 0;
  auto* cv = app.add_subcommand("cv", "cross-validate one repetition and print grid scores");
  cv->add_option("-c,--config", config, "experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
  cv->add_option("--rep", rep, "repetition index (seed = seed + rep)");

  std::string result_path, csv;
  data::CsvOptions csv_opts;
  bool no_header = false;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a trained model from a result document on a CSV file");
  evaluate_cmd->add_option("-r,--result", result_path, "result document written by train")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--rep", rep, "repetition whose model to use");
  evaluate_cmd->add_option("--csv", csv, "data to score")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--label", csv_opts.label_column, "label column name (index without a header)")->required();
  evaluate_cmd->add_option("--positive", csv_opts.positive_label, "raw label value of the positive class");
  evaluate_cmd->add_flag("--no-header", no_header, "the file has no header row");

  std::vector<std::size_t> sizes{500, 1000, 2000};
  std::vector<std::size_t> client_counts{4};
  std::size_t dim = 4, runs = 5;
  std::uint64_t seed = 0;
  auto* bench = app.add_subcommand("bench", "median wall time of one SM round");
  bench->add_option("--n", sizes, "total sample counts")->delimiter(',');
  bench->add_option("--clients", client_counts, "client counts")->delimiter(',');
  bench->add_option("--dim", dim, "feature dimension");
  bench->add_option("--runs", runs, "runs per setting");
  bench->add_option("--seed", seed, "data seed");

  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  int accept_timeout_ms = 60000;
  Overrides ov;
  auto* serve = app.add_subcommand("serve", "run the server role over TCP");
  serve->add_option("-c,--config", config, "experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "listen port (0 picks one)");
  serve->add_option("--rep", rep, "repetition index whose data split to use");
  serve->add_option("--accept-timeout-ms", accept_timeout_ms, "give up waiting for a client after this long");
  ov.attach(serve);

  std::size_t client_id = 0;
  auto* client = app.add_subcommand("client", "run one client role over TCP");
  client->add_option("-c,--config", config, "experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
  client->add_option("--host", host, "server address");
  client->add_option("--port", port, "server port")->required();
  client->add_option("--id", client_id, "client index")->required();
  client->add_option("--rep", rep, "repetition index whose data split to use");
  ov.attach(client);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(config, output, reps);
    if (*cv) return cmd_cv(config, rep);
    if (*evaluate_cmd) {
      csv_opts.has_header = !no_header;
      return cmd_evaluate(result_path, rep, csv, csv_opts);
    }
    if (*bench) return cmd_bench(sizes, client_counts, dim, runs, seed);
    if (*serve) return cmd_serve(config, host, port, rep, ov, accept_timeout_ms);
    if (*client) return cmd_client(config, host, port, client_id, rep, ov);
  } catch (const exp::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRunFailure;
  }
  return kOk;
}
