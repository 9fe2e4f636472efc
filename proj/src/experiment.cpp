#include "fdrsvm/experiment.hpp"

#include "fdrsvm/baselines.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

namespace fdrsvm::exp {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool same(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

bool same(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) { return same(x, y); });
}

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return seed * 0x9E3779B97F4A7C15ULL + a * 0xBF58476D1CE4E5B9ULL + b;
}

fed::Algorithm algorithm_of(Model model) {
  switch (model) {
    case Model::SM:
      return fed::Algorithm::SM;
    case Model::ADMM_SC:
      return fed::Algorithm::ADMM_SC;
    default:
      return fed::Algorithm::ADMM;
  }
}

baselines::FedVariant variant_of(Model model) {
  switch (model) {
    case Model::FedSGD:
      return baselines::FedVariant::FedSGD;
    case Model::FedProx:
      return baselines::FedVariant::FedProx;
    default:
      return baselines::FedVariant::FedAvg;
  }
}

}  // namespace

bool RoundRecord::operator==(const RoundRecord& o) const {
  return t == o.t && same(objective, o.objective) && same(consensus, o.consensus) && same(wall_time, o.wall_time);
}

bool RepetitionResult::operator==(const RepetitionResult& o) const {
  return index == o.index && seed == o.seed && ok == o.ok && error == o.error && chosen == o.chosen &&
         same(cv_score, o.cv_score) && fold_resamples == o.fold_resamples && same(f1, o.f1) && same(mccr, o.mccr) &&
         same(wall_time, o.wall_time) && same(weights, o.weights) && same(scale_lo, o.scale_lo) &&
         same(scale_hi, o.scale_hi) && trace == o.trace && warnings == o.warnings;
}

bool Aggregate::operator==(const Aggregate& o) const {
  return succeeded == o.succeeded && failed == o.failed && same(mean_f1, o.mean_f1) && same(std_f1, o.std_f1) &&
         same(mean_mccr, o.mean_mccr) && same(std_mccr, o.std_mccr);
}

std::vector<HyperParams> expand_grid(const ExperimentConfig& cfg) {
  std::vector<HyperParams> out;
  const auto& g = cfg.grid;
  switch (cfg.model) {
    case Model::CentralDR:
      for (double e : g.epsilon) {
        for (double k : g.kappa) {
          HyperParams hp;
          hp.epsilon = e;
          hp.kappa = k;
          out.push_back(hp);
        }
      }
      break;
    case Model::ADMM:
    case Model::ADMM_SC:
      for (double r : g.rho) {
        for (auto t : g.rounds) {
          HyperParams hp;
          hp.rho = r;
          hp.rounds = t;
          out.push_back(hp);
        }
      }
      break;
    default:
      for (double s : g.gamma0) {
        for (auto t : g.rounds) {
          HyperParams hp;
          hp.gamma0 = s;
          hp.rounds = t;
          out.push_back(hp);
        }
      }
  }
  return out;
}

PreparedData prepare_repetition(const ExperimentConfig& cfg, std::uint64_t seed) {
  DatasetView full;
  if (cfg.dataset.csv) {
    full = data::load_csv(cfg.dataset.csv->path, cfg.dataset.csv->options).view();
  } else {
    auto spec = cfg.dataset.synthetic;
    spec.seed = seed;
    spec.clients = 1;
    full = data::generate_synthetic(spec);
  }
  auto [train, test] = data::train_test_split(full, cfg.dataset.train_fraction, seed);
  PreparedData out;
  out.scaler = data::MinMaxScaler::fit(train);
  train = out.scaler.apply(train);
  test = out.scaler.apply(test);
  if (cfg.dataset.bias) {
    train = data::with_bias(train);
    test = data::with_bias(test);
  }
  auto plan = cfg.partition;
  plan.seed = seed;
  out.partition_info = data::partition(train, plan);
  out.clients = out.partition_info.clients;
  out.test = std::move(test);
  return out;
}

fed::FederationConfig federation_config(const ExperimentConfig& cfg, const HyperParams& hp,
                                        const std::vector<DatasetView>& clients) {
  fed::FederationConfig fc;
  fc.algorithm = algorithm_of(cfg.model);
  fc.rounds = hp.rounds;
  fc.gamma0 = cfg.model == Model::SM ? hp.gamma0 : 1.0;
  fc.rho = cfg.model == Model::SM ? 1.0 : hp.rho;
  const auto alphas = baselines::equal_weights(clients.size());
  for (std::size_t g = 0; g < clients.size(); ++g) {
    ClientConfig c;
    c.epsilon = 1.0 / (cfg.radius_beta * static_cast<double>(clients[g].size()));
    c.kappa = cfg.client_kappa;
    c.alpha = alphas[g];
    c.norm = cfg.norm;
    c.rho = fc.rho;
    c.tau = cfg.model == Model::ADMM_SC ? cfg.tau_factor * hp.rho : 0.0;
    fc.clients.push_back(c);
  }
  return fc;
}

TrainedModel train_model(const ExperimentConfig& cfg, const HyperParams& hp, const std::vector<DatasetView>& clients,
                         std::uint64_t seed) {
  TrainedModel out;
  if (is_federated_dr(cfg.model)) {
    const auto fc = federation_config(cfg, hp, clients);
    const auto result = fed::run_federation(fc, clients);
    for (const auto& r : result.trace) {
      out.snapshots.push_back(r.w_after);
      out.trace.push_back({r.t, r.global_objective, cfg.model == Model::SM ? kNaN : r.consensus_residual, r.wall_time});
    }
    out.model = result.final_model;
    out.warnings = result.warnings;
  } else if (cfg.model == Model::CentralDR) {
    const auto start = Clock::now();
    const auto result = baselines::train_central_dr_svm(data::concatenate(clients), {hp.epsilon, hp.kappa, cfg.norm});
    out.model = result.model;
    out.snapshots.push_back(result.model);
    out.trace.push_back({1, result.objective, kNaN, seconds_since(start)});
  } else {
    baselines::FedBaselineConfig bc;
    bc.variant = variant_of(cfg.model);
    bc.gamma0 = hp.gamma0;
    bc.rounds = hp.rounds;
    bc.local_epochs = cfg.local_epochs;
    bc.batch_fraction = cfg.batch_fraction;
    bc.prox_mu = cfg.prox_mu;
    const auto result = baselines::train_fed_l2_svm(clients, bc, seed);
    for (std::size_t t = 0; t < result.trace.size(); ++t) {
      out.trace.push_back({t + 1, result.objective[t], kNaN, kNaN});
    }
    out.snapshots = result.trace;
    out.model = result.final_model;
  }
  return out;
}

namespace {

struct Fold {
  std::vector<DatasetView> train;
  DatasetView validation;
};

bool has_both_classes(const DatasetView& d) { return d.count_label(1) > 0 && d.count_label(-1) > 0; }

std::vector<Fold> make_folds(const std::vector<DatasetView>& clients, std::size_t k, std::uint64_t seed,
                             std::size_t& resamples) {
  constexpr std::size_t kMaxAttempts = 50;
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<std::vector<std::pair<DatasetView, DatasetView>>> per_client;
    for (std::size_t g = 0; g < clients.size(); ++g) {
      per_client.push_back(data::stratified_folds(clients[g], k, mix(seed, attempt, g)));
    }
    std::vector<Fold> folds(k);
    bool ok = true;
    for (std::size_t f = 0; f < k && ok; ++f) {
      std::vector<DatasetView> val;
      for (std::size_t g = 0; g < clients.size(); ++g) {
        folds[f].train.push_back(per_client[g][f].first);
        val.push_back(per_client[g][f].second);
        ok = ok && !per_client[g][f].first.empty();
      }
      folds[f].validation = data::concatenate(val);
      ok = ok && has_both_classes(folds[f].validation) && has_both_classes(data::concatenate(folds[f].train));
    }
    if (ok) return folds;
    ++resamples;
  }
  throw std::runtime_error("cross-validation: could not draw folds with both classes in " +
                           std::to_string(kMaxAttempts) + " attempts");
}

}  // namespace

CvOutcome cross_validate(const ExperimentConfig& cfg, const std::vector<DatasetView>& clients, std::uint64_t seed) {
  const auto points = expand_grid(cfg);
  if (points.empty()) throw ConfigError("empty hyperparameter grid");
  CvOutcome out;
  const auto folds = make_folds(clients, cfg.folds, seed, out.fold_resamples);
  out.grid_scores.assign(points.size(), 0.0);

  // Points that differ only in the round count share one run to the largest
  // count, evaluated at each requested snapshot.
  std::size_t begin = 0;
  while (begin < points.size()) {
    std::size_t end = begin + 1;
    auto same_run = [&](const HyperParams& a, const HyperParams& b) {
      return a.rho == b.rho && a.gamma0 == b.gamma0 && a.epsilon == b.epsilon && a.kappa == b.kappa;
    };
    while (end < points.size() && cfg.model != Model::CentralDR && same_run(points[begin], points[end])) ++end;
    HyperParams longest = points[begin];
    for (std::size_t i = begin; i < end; ++i) longest.rounds = std::max(longest.rounds, points[i].rounds);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      const auto trained = train_model(cfg, longest, folds[f].train, mix(seed, f, 7));
      for (std::size_t i = begin; i < end; ++i) {
        const auto& snap = cfg.model == Model::CentralDR ? trained.snapshots.back() : trained.snapshots[points[i].rounds - 1];
        out.grid_scores[i] += evaluate(snap, folds[f].validation).f1 / static_cast<double>(folds.size());
      }
    }
    begin = end;
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (out.grid_scores[i] > out.grid_scores[best]) best = i;
  }
  out.chosen = points[best];
  out.score = out.grid_scores[best];
  return out;
}

Aggregate summarize(const std::vector<RepetitionResult>& reps) {
  Aggregate a;
  std::vector<double> f1, mccr;
  for (const auto& r : reps) {
    if (r.ok) {
      f1.push_back(r.f1);
      mccr.push_back(r.mccr);
    }
  }
  a.succeeded = f1.size();
  a.failed = reps.size() - f1.size();
  auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
    if (v.empty()) {
      mean = sd = kNaN;
      return;
    }
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  };
  mean_std(f1, a.mean_f1, a.std_f1);
  mean_std(mccr, a.mean_mccr, a.std_mccr);
  return a;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult result;
  result.config_text = cfg.source_text;
  result.model = std::string(to_string(cfg.model));
  for (std::size_t i = 0; i < cfg.repetitions; ++i) {
    RepetitionResult rep;
    rep.index = i;
    rep.seed = cfg.base_seed + i;
    const auto start = Clock::now();
    try {
      // The test split is fixed before any tuning sees the data.
      const auto prepared = prepare_repetition(cfg, rep.seed);
      HyperParams hp = expand_grid(cfg).front();
      if (cfg.cv) {
        const auto cv = cross_validate(cfg, prepared.clients, rep.seed);
        hp = cv.chosen;
        rep.cv_score = cv.score;
        rep.fold_resamples = cv.fold_resamples;
      } else {
        rep.cv_score = kNaN;
      }
      const auto trained = train_model(cfg, hp, prepared.clients, rep.seed);
      const auto metrics = evaluate(trained.model, prepared.test);
      rep.chosen = hp;
      rep.f1 = metrics.f1;
      rep.mccr = metrics.mccr;
      rep.weights.assign(trained.model.w.begin(), trained.model.w.end());
      rep.scale_lo.assign(prepared.scaler.lo().begin(), prepared.scaler.lo().end());
      rep.scale_hi.assign(prepared.scaler.hi().begin(), prepared.scaler.hi().end());
      rep.trace = trained.trace;
      rep.warnings = trained.warnings;
      rep.ok = true;
    } catch (const std::exception& e) {
      rep.ok = false;
      rep.error = e.what();
    }
    rep.wall_time = seconds_since(start);
    result.repetitions.push_back(std::move(rep));
  }
  result.aggregate = summarize(result.repetitions);
  return result;
}

int exit_code(const RunResult& result) {
  const auto& a = result.aggregate;
  const std::size_t total = a.succeeded + a.failed;
  if (total > 0 && a.succeeded == 0) return 2;
  if (10 * a.failed > total) return 3;
  return 0;
}

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

json numbers(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(number(x));
  return out;
}

std::vector<double> numbers(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(number(x));
  return out;
}

}  // namespace

std::string to_json_text(const RunResult& result) {
  json doc;
  doc["config"] = result.config_text;
  doc["model"] = result.model;
  json reps = json::array();
  for (const auto& r : result.repetitions) {
    json trace = json::array();
    for (const auto& t : r.trace) {
      trace.push_back({{"t", t.t}, {"objective", number(t.objective)}, {"consensus", number(t.consensus)},
                       {"wall_time", number(t.wall_time)}});
    }
    reps.push_back({{"index", r.index},
                    {"seed", r.seed},
                    {"ok", r.ok},
                    {"error", r.error},
                    {"chosen",
                     {{"rho", r.chosen.rho},
                      {"gamma0", r.chosen.gamma0},
                      {"rounds", r.chosen.rounds},
                      {"epsilon", r.chosen.epsilon},
                      {"kappa", r.chosen.kappa}}},
                    {"cv_score", number(r.cv_score)},
                    {"fold_resamples", r.fold_resamples},
                    {"f1", number(r.f1)},
                    {"mccr", number(r.mccr)},
                    {"wall_time", number(r.wall_time)},
                    {"weights", numbers(r.weights)},
                    {"scale_lo", numbers(r.scale_lo)},
                    {"scale_hi", numbers(r.scale_hi)},
                    {"trace", trace},
                    {"warnings", r.warnings}});
  }
  doc["repetitions"] = reps;
  const auto& a = result.aggregate;
  doc["aggregate"] = {{"succeeded", a.succeeded}, {"failed", a.failed},          {"mean_f1", number(a.mean_f1)},
                      {"std_f1", number(a.std_f1)}, {"mean_mccr", number(a.mean_mccr)}, {"std_mccr", number(a.std_mccr)}};
  return doc.dump(2);
}

RunResult parse_result(const std::string& text) {
  const auto doc = json::parse(text);
  RunResult result;
  result.config_text = doc.at("config").get<std::string>();
  result.model = doc.at("model").get<std::string>();
  for (const auto& j : doc.at("repetitions")) {
    RepetitionResult r;
    r.index = j.at("index").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.ok = j.at("ok").get<bool>();
    r.error = j.at("error").get<std::string>();
    const auto& c = j.at("chosen");
    r.chosen = {c.at("rho").get<double>(), c.at("gamma0").get<double>(), c.at("rounds").get<std::size_t>(),
                c.at("epsilon").get<double>(), c.at("kappa").get<double>()};
    r.cv_score = number(j.at("cv_score"));
    r.fold_resamples = j.at("fold_resamples").get<std::size_t>();
    r.f1 = number(j.at("f1"));
    r.mccr = number(j.at("mccr"));
    r.wall_time = number(j.at("wall_time"));
    r.weights = numbers(j.at("weights"));
    r.scale_lo = numbers(j.at("scale_lo"));
    r.scale_hi = numbers(j.at("scale_hi"));
    for (const auto& t : j.at("trace")) {
      r.trace.push_back({t.at("t").get<std::size_t>(), number(t.at("objective")), number(t.at("consensus")),
                         number(t.at("wall_time"))});
    }
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    result.repetitions.push_back(std::move(r));
  }
  const auto& a = doc.at("aggregate");
  result.aggregate = {a.at("succeeded").get<std::size_t>(), a.at("failed").get<std::size_t>(), number(a.at("mean_f1")),
                      number(a.at("std_f1")),            number(a.at("mean_mccr")),          number(a.at("std_mccr"))};
  return result;
}

std::string csv_path_for(const std::string& path) {
  std::filesystem::path p(path);
  if (p.extension() == ".json") p.replace_extension();
  return p.string() + ".rounds.csv";
}

void emit_results(const RunResult& result, const std::string& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << to_json_text(result) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
  }
  const auto csv = csv_path_for(path);
  std::ofstream out(csv, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + csv);
  out << "repetition,seed,t,objective,consensus,wall_time\n";
  auto field = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : result.repetitions) {
    for (const auto& t : r.trace) {
      out << r.index << ',' << r.seed << ',' << t.t << ',' << field(t.objective) << ',' << field(t.consensus) << ','
          << field(t.wall_time) << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed for " + csv);
}

double bench_sm_round(std::size_t n_total, std::size_t clients, std::size_t dim, std::size_t runs, std::uint64_t seed) {
  if (runs == 0) throw std::invalid_argument("bench_sm_round: need at least one run");
  data::SyntheticSpec spec;
  spec.n = n_total;
  spec.dim = dim;
  spec.clients = clients;
  spec.seed = seed;
  const auto raw = data::generate_synthetic(spec);
  const auto scaled = data::MinMaxScaler::fit(raw).apply(raw);
  data::PartitionPlan plan;
  plan.clients = clients;
  plan.seed = seed;
  const auto parts = data::partition(scaled, plan).clients;

  ExperimentConfig cfg;
  cfg.model = Model::SM;
  HyperParams hp;
  hp.gamma0 = 1.0;
  hp.rounds = 1;
  const auto fc = federation_config(cfg, hp, parts);
  std::vector<double> times;
  for (std::size_t r = 0; r < runs; ++r) {
    const auto result = fed::run_federation(fc, parts);
    times.push_back(result.trace.at(0).wall_time);
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace fdrsvm::exp
