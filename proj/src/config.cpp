#include "fdrsvm/experiment.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace fdrsvm::exp {

using nlohmann::json;

std::string_view to_string(Model model) {
  switch (model) {
    case Model::SM:
      return "SM";
    case Model::ADMM:
      return "ADMM";
    case Model::ADMM_SC:
      return "ADMM_SC";
    case Model::CentralDR:
      return "CentralDR";
    case Model::FedSGD:
      return "FedSGD";
    case Model::FedAvg:
      return "FedAvg";
    case Model::FedProx:
      return "FedProx";
  }
  return "?";
}

Model parse_model(std::string_view text) {
  for (Model m : {Model::SM, Model::ADMM, Model::ADMM_SC, Model::CentralDR, Model::FedSGD, Model::FedAvg, Model::FedProx}) {
    if (to_string(m) == text) return m;
  }
  if (text == "ADMM-SC") return Model::ADMM_SC;
  throw ConfigError("unknown model '" + std::string(text) + "'");
}

bool is_federated_dr(Model model) { return model == Model::SM || model == Model::ADMM || model == Model::ADMM_SC; }

bool is_fed_baseline(Model model) {
  return model == Model::FedSGD || model == Model::FedAvg || model == Model::FedProx;
}

Grid default_grid(Model model) {
  Grid g;
  const std::vector<std::size_t> rounds{5, 10, 20, 60, 100, 140, 180, 220};
  switch (model) {
    case Model::SM:
      g.gamma0 = {1.0, 10.0, 100.0, 1000.0};
      g.rounds = {100, 140, 180, 220};
      break;
    case Model::ADMM:
    case Model::ADMM_SC:
      g.rho = {1e-3, 1e-2, 1e-1, 1.0};
      g.rounds = rounds;
      break;
    case Model::CentralDR:
      g.epsilon = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
      g.kappa = {0.1, 0.25, 0.5, 0.75, 1.0};
      break;
    case Model::FedSGD:
    case Model::FedAvg:
    case Model::FedProx:
      g.gamma0 = {1e-3, 1e-2, 1e-1, 1.0};
      g.rounds = rounds;
      break;
  }
  return g;
}

std::size_t default_repetitions(Model model) { return is_federated_dr(model) ? 10 : 50; }

void ExperimentConfig::validate() const {
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  auto positive_list = [&](const std::vector<double>& v, const char* name) {
    need(!v.empty(), std::string("grid.") + name + " must not be empty for model " + std::string(to_string(model)));
    for (double x : v) need(std::isfinite(x) && x > 0.0, std::string("grid.") + name + " entries must be positive");
  };
  switch (model) {
    case Model::SM:
      positive_list(grid.gamma0, "gamma0");
      break;
    case Model::ADMM:
    case Model::ADMM_SC:
      positive_list(grid.rho, "rho");
      break;
    case Model::CentralDR:
      positive_list(grid.epsilon, "epsilon");
      need(!grid.kappa.empty(), "grid.kappa must not be empty for model CentralDR");
      for (double k : grid.kappa) need(std::isfinite(k) && k >= 0.0, "grid.kappa entries must be nonnegative");
      break;
    default:
      positive_list(grid.gamma0, "gamma0");
  }
  if (model != Model::CentralDR) {
    need(!grid.rounds.empty(), "grid.rounds must not be empty for model " + std::string(to_string(model)));
    for (auto r : grid.rounds) need(r > 0, "grid.rounds entries must be positive");
  }
  need(!cv || folds >= 2, "cv.folds must be at least 2");
  need(repetitions >= 1, "repetitions must be at least 1");
  need(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0, "train_fraction must lie in (0, 1)");
  need(client_kappa >= 0.0, "kappa must be nonnegative");
  need(radius_beta > 0.0, "radius_beta must be positive");
  need(tau_factor > 0.0, "tau_factor must be positive");
  need(local_epochs >= 1, "fed_baseline.local_epochs must be positive");
  need(batch_fraction > 0.0 && batch_fraction <= 1.0, "fed_baseline.batch_fraction must lie in (0, 1]");
  need(prox_mu >= 0.0, "fed_baseline.prox_mu must be nonnegative");
  if (dataset.csv) {
    need(!dataset.csv->path.empty(), "dataset.csv.path must be set");
    need(!dataset.csv->options.label_column.empty(), "dataset.csv.label_column must be set");
  } else {
    need(dataset.synthetic.dim >= 1, "dataset.synthetic.dim must be positive");
    need(dataset.synthetic.n >= 2, "dataset.synthetic.n must be at least 2");
  }
  try {
    partition.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

namespace {

// Reads the listed keys of an object and rejects any other.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + " has the wrong type");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& at(const char* key) const { return j_.at(key); }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key " + where_ + "." + key);
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  cfg.source_text = text;
  Reader root(doc, "config");

  std::string model = "ADMM";
  root.get("model", model);
  cfg.model = parse_model(model);

  if (root.has("dataset")) {
    Reader ds(root.at("dataset"), "dataset");
    ds.get("train_fraction", cfg.dataset.train_fraction);
    ds.get("bias", cfg.dataset.bias);
    if (ds.has("csv")) {
      Reader csv(root.at("dataset").at("csv"), "dataset.csv");
      CsvSource src;
      csv.get("path", src.path);
      csv.get("label_column", src.options.label_column);
      csv.get("positive_label", src.options.positive_label);
      csv.get("has_header", src.options.has_header);
      csv.finish();
      cfg.dataset.csv = src;
    }
    if (ds.has("synthetic")) {
      if (cfg.dataset.csv) throw ConfigError("dataset must name either csv or synthetic, not both");
      Reader syn(root.at("dataset").at("synthetic"), "dataset.synthetic");
      syn.get("n", cfg.dataset.synthetic.n);
      syn.get("dim", cfg.dataset.synthetic.dim);
      syn.get("side", cfg.dataset.synthetic.side);
      syn.finish();
    }
    ds.finish();
  }

  if (root.has("partition")) {
    Reader p(root.at("partition"), "partition");
    std::string scheme = "Even";
    p.get("scheme", scheme);
    try {
      cfg.partition.scheme = data::parse_partition_scheme(scheme);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    p.get("clients", cfg.partition.clients);
    p.get("client_fractions", cfg.partition.client_fractions);
    p.get("class_fractions", cfg.partition.class_fractions);
    p.get("noise_rate", cfg.partition.noise_rate);
    p.finish();
  }

  std::string norm = "L1";
  root.get("norm", norm);
  try {
    cfg.norm = parse_norm(norm);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  root.get("kappa", cfg.client_kappa);
  root.get("radius_beta", cfg.radius_beta);
  root.get("tau_factor", cfg.tau_factor);

  if (root.has("fed_baseline")) {
    Reader fb(root.at("fed_baseline"), "fed_baseline");
    fb.get("local_epochs", cfg.local_epochs);
    fb.get("batch_fraction", cfg.batch_fraction);
    fb.get("prox_mu", cfg.prox_mu);
    fb.finish();
  }

  cfg.grid = default_grid(cfg.model);
  if (root.has("grid")) {
    Reader g(root.at("grid"), "grid");
    g.get("rho", cfg.grid.rho);
    g.get("gamma0", cfg.grid.gamma0);
    g.get("rounds", cfg.grid.rounds);
    g.get("epsilon", cfg.grid.epsilon);
    g.get("kappa", cfg.grid.kappa);
    g.finish();
  }

  if (root.has("cv")) {
    Reader cv(root.at("cv"), "cv");
    cv.get("enabled", cfg.cv);
    cv.get("folds", cfg.folds);
    cv.finish();
  }

  cfg.repetitions = default_repetitions(cfg.model);
  root.get("repetitions", cfg.repetitions);
  root.get("seed", cfg.base_seed);
  root.get("output", cfg.output);
  root.finish();

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read configuration " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

}  // namespace fdrsvm::exp
