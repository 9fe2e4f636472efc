#include "fdrsvm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace fdrsvm::data {

DatasetView RawTable::view() const {
  std::vector<LabeledSample> samples;
  samples.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) samples.push_back({rows[i], labels[i]});
  return DatasetView(std::move(samples), dim());
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\"");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(const std::string& text, double& value) {
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last && std::isfinite(value);
}

// Numeric labels compare by value, others lexicographically.
bool label_less(const std::string& a, const std::string& b) {
  double x = 0.0, y = 0.0;
  if (parse_double(a, x) && parse_double(b, y)) return x < y;
  return a < b;
}

}  // namespace

RawTable parse_csv(std::istream& in, const CsvOptions& options, const std::string& source) {
  using Kind = CsvError::Kind;
  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> line_numbers;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    records.push_back(split_fields(line));
    line_numbers.push_back(line_no);
  }
  if (records.empty()) throw CsvError(Kind::Empty, source + ": no rows");

  std::vector<std::string> header;
  std::size_t first_data = 0;
  if (options.has_header) {
    header = records[0];
    first_data = 1;
  } else {
    for (std::size_t c = 0; c < records[0].size(); ++c) header.push_back(std::to_string(c));
  }
  if (records.size() == first_data) throw CsvError(Kind::Empty, source + ": header only, no data rows");

  const auto label_it = std::find(header.begin(), header.end(), options.label_column);
  if (label_it == header.end()) {
    throw CsvError(Kind::MissingColumn, source + ": label column '" + options.label_column + "' not found");
  }
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());

  RawTable table;
  table.label_name = options.label_column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_col) table.feature_names.push_back(header[c]);
  }
  std::vector<std::string> raw_labels;
  for (std::size_t r = first_data; r < records.size(); ++r) {
    const auto& rec = records[r];
    const std::string where = source + ":" + std::to_string(line_numbers[r]);
    if (rec.size() != header.size()) {
      throw CsvError(Kind::Malformed, where + ": expected " + std::to_string(header.size()) + " fields, found " +
                                          std::to_string(rec.size()));
    }
    Vector x(static_cast<Eigen::Index>(header.size() - 1));
    Eigen::Index p = 0;
    for (std::size_t c = 0; c < rec.size(); ++c) {
      if (c == label_col) continue;
      double v = 0.0;
      if (!parse_double(rec[c], v)) {
        throw CsvError(Kind::NonNumeric, where + ": column '" + header[c] + "' has non-numeric value '" + rec[c] + "'");
      }
      x[p++] = v;
    }
    table.rows.push_back(std::move(x));
    raw_labels.push_back(rec[label_col]);
  }

  std::set<std::string> distinct(raw_labels.begin(), raw_labels.end());
  if (!options.positive_label.empty()) {
    table.positive_label = options.positive_label;
    distinct.erase(options.positive_label);
    if (distinct.size() > 1) {
      throw CsvError(Kind::UnknownLabel, source + ": label column has more than two values besides '" +
                                              options.positive_label + "'");
    }
    table.negative_label = distinct.empty() ? std::string() : *distinct.begin();
  } else {
    if (distinct.size() != 2) {
      throw CsvError(Kind::UnknownLabel, source + ": expected exactly two label values, found " +
                                              std::to_string(distinct.size()));
    }
    std::vector<std::string> sorted(distinct.begin(), distinct.end());
    std::sort(sorted.begin(), sorted.end(), label_less);
    table.negative_label = sorted[0];
    table.positive_label = sorted[1];
  }
  for (const auto& l : raw_labels) table.labels.push_back(l == table.positive_label ? 1 : -1);
  return table;
}

RawTable load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw CsvError(CsvError::Kind::Io, "cannot open " + path);
  return parse_csv(in, options, path);
}

MinMaxScaler MinMaxScaler::fit(const DatasetView& train) {
  if (train.empty()) throw std::invalid_argument("MinMaxScaler::fit: empty training set");
  MinMaxScaler s;
  s.lo_ = train[0].x;
  s.hi_ = train[0].x;
  for (const auto& sample : train) {
    s.lo_ = s.lo_.cwiseMin(sample.x);
    s.hi_ = s.hi_.cwiseMax(sample.x);
  }
  return s;
}

MinMaxScaler MinMaxScaler::from_bounds(Vector lo, Vector hi) {
  if (lo.size() != hi.size()) throw std::invalid_argument("MinMaxScaler::from_bounds: bound lengths differ");
  MinMaxScaler s;
  s.lo_ = std::move(lo);
  s.hi_ = std::move(hi);
  return s;
}

DatasetView MinMaxScaler::apply(const DatasetView& data) const {
  if (data.dim() != static_cast<std::size_t>(lo_.size())) throw std::invalid_argument("MinMaxScaler::apply: dimension mismatch");
  std::vector<LabeledSample> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    Vector x(s.x.size());
    for (Eigen::Index p = 0; p < x.size(); ++p) {
      const double range = hi_[p] - lo_[p];
      x[p] = range > 0.0 ? std::clamp((s.x[p] - lo_[p]) / range, 0.0, 1.0) : 0.0;
    }
    out.push_back({std::move(x), s.y});
  }
  return DatasetView(std::move(out), data.dim());
}

DatasetView with_bias(const DatasetView& data) {
  std::vector<LabeledSample> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    Vector x(s.x.size() + 1);
    x << s.x, 1.0;
    out.push_back({std::move(x), s.y});
  }
  return DatasetView(std::move(out), data.dim() + 1);
}

std::string to_string(PartitionScheme scheme) {
  switch (scheme) {
    case PartitionScheme::Even:
      return "Even";
    case PartitionScheme::ClientImbalance:
      return "ClientImbalance";
    case PartitionScheme::ClassImbalance:
      return "ClassImbalance";
    case PartitionScheme::ClientPlusClass:
      return "ClientPlusClass";
    case PartitionScheme::LabelNoise:
      return "LabelNoise";
  }
  return "?";
}

PartitionScheme parse_partition_scheme(const std::string& text) {
  for (auto s : {PartitionScheme::Even, PartitionScheme::ClientImbalance, PartitionScheme::ClassImbalance,
                 PartitionScheme::ClientPlusClass, PartitionScheme::LabelNoise}) {
    if (to_string(s) == text) return s;
  }
  throw std::invalid_argument("unknown partition scheme '" + text + "'");
}

void PartitionPlan::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("PartitionPlan: " + what); };
  auto check_fractions = [&](const std::vector<double>& f, std::size_t expected, const char* name) {
    if (f.size() != expected) fail(std::string(name) + " needs " + std::to_string(expected) + " entries");
    for (double v : f) {
      if (!(v >= 0.0)) fail(std::string(name) + " must be nonnegative");
    }
    if (std::abs(std::accumulate(f.begin(), f.end(), 0.0) - 1.0) > 1e-9) fail(std::string(name) + " must sum to 1");
  };
  if (clients == 0) fail("at least one client is required");
  if (scheme == PartitionScheme::ClientImbalance || scheme == PartitionScheme::ClientPlusClass) {
    check_fractions(client_fractions, clients, "client_fractions");
  }
  if (scheme == PartitionScheme::ClassImbalance || scheme == PartitionScheme::ClientPlusClass) {
    check_fractions(class_fractions, 2, "class_fractions");
  }
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) fail("noise_rate must lie in [0, 1]");
}

std::vector<std::size_t> allocate(std::size_t total, const std::vector<double>& fractions) {
  std::vector<std::size_t> sizes(fractions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t used = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = fractions[i] * static_cast<double>(total);
    sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    used += sizes[i];
    remainders.emplace_back(exact - static_cast<double>(sizes[i]), i);
  }
  // ties go to the earlier index
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < total && k < remainders.size(); ++k, ++used) ++sizes[remainders[k].second];
  return sizes;
}

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> class_indices(const DatasetView& data) {
  std::vector<std::size_t> neg, pos;
  for (std::size_t i = 0; i < data.size(); ++i) (data[i].y > 0 ? pos : neg).push_back(i);
  return {neg, pos};
}

// Merges per-class lists so every prefix is close to the overall class ratio.
std::vector<std::size_t> interleave(const std::vector<std::size_t>& neg, const std::vector<std::size_t>& pos) {
  std::vector<std::pair<double, std::size_t>> keyed;
  for (std::size_t i = 0; i < neg.size(); ++i) keyed.emplace_back((i + 0.5) / static_cast<double>(neg.size()), neg[i]);
  for (std::size_t i = 0; i < pos.size(); ++i) keyed.emplace_back((i + 0.5) / static_cast<double>(pos.size()), pos[i]);
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::size_t> out;
  for (const auto& k : keyed) out.push_back(k.second);
  return out;
}

DatasetView gather(const DatasetView& data, const std::vector<std::size_t>& idx) { return data.subset(idx); }

}  // namespace

PartitionResult partition(const DatasetView& data, const PartitionPlan& plan) {
  plan.validate();
  auto rng = make_rng(plan.seed, 0);
  auto [neg, pos] = class_indices(data);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::shuffle(pos.begin(), pos.end(), rng);

  const bool class_imbalance =
      plan.scheme == PartitionScheme::ClassImbalance || plan.scheme == PartitionScheme::ClientPlusClass;
  if (class_imbalance) {
    // Downsample so the kept counts follow the target ratio as closely as the
    // pool allows.
    const double f_neg = plan.class_fractions[0];
    const double f_pos = plan.class_fractions[1];
    double total = std::numeric_limits<double>::infinity();
    if (f_neg > 0.0) total = std::min(total, static_cast<double>(neg.size()) / f_neg);
    if (f_pos > 0.0) total = std::min(total, static_cast<double>(pos.size()) / f_pos);
    const auto keep = allocate(static_cast<std::size_t>(std::floor(total + 1e-9)), plan.class_fractions);
    neg.resize(std::min(neg.size(), keep[0]));
    pos.resize(std::min(pos.size(), keep[1]));
  }

  PartitionResult result;
  result.kept_negative = neg.size();
  result.kept_positive = pos.size();
  const std::size_t total = neg.size() + pos.size();
  const std::size_t G = plan.clients;
  if (total < G) {
    throw std::invalid_argument("partition: " + std::to_string(total) + " samples cannot cover " + std::to_string(G) + " clients");
  }

  std::vector<std::vector<std::size_t>> assigned(G);
  const bool client_imbalance =
      plan.scheme == PartitionScheme::ClientImbalance || plan.scheme == PartitionScheme::ClientPlusClass;
  if (client_imbalance) {
    const auto sizes = allocate(total, plan.client_fractions);
    const auto order = interleave(neg, pos);
    std::size_t at = 0;
    for (std::size_t g = 0; g < G; ++g) {
      if (sizes[g] == 0) {
        throw std::invalid_argument("partition: client " + std::to_string(g) + " would receive no samples");
      }
      assigned[g].assign(order.begin() + static_cast<std::ptrdiff_t>(at), order.begin() + static_cast<std::ptrdiff_t>(at + sizes[g]));
      at += sizes[g];
    }
  } else {
    // stratified round-robin, continuing across the class boundary
    std::size_t g = 0;
    for (const auto* cls : {&neg, &pos}) {
      for (std::size_t i : *cls) {
        assigned[g].push_back(i);
        g = (g + 1) % G;
      }
    }
  }

  for (auto& idx : assigned) {
    std::sort(idx.begin(), idx.end());
    result.clients.push_back(gather(data, idx));
  }

  if (plan.scheme == PartitionScheme::LabelNoise) {
    const auto flips = static_cast<std::size_t>(std::llround(plan.noise_rate * static_cast<double>(total)));
    // positions in the pooled client data, chosen without replacement
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t i = 0; i < result.clients[g].size(); ++i) slots.emplace_back(g, i);
    }
    auto noise_rng = make_rng(plan.seed, 1);
    std::shuffle(slots.begin(), slots.end(), noise_rng);
    slots.resize(flips);
    std::vector<std::vector<LabeledSample>> samples(G);
    for (std::size_t g = 0; g < G; ++g) samples[g] = result.clients[g].samples();
    for (const auto& [g, i] : slots) samples[g][i].y = -samples[g][i].y;
    for (std::size_t g = 0; g < G; ++g) result.clients[g] = DatasetView(std::move(samples[g]), data.dim());
    result.flipped = flips;
  }
  return result;
}

DatasetView generate_synthetic(const SyntheticSpec& spec) {
  if (spec.dim == 0) throw std::invalid_argument("generate_synthetic: dimension must be positive");
  if (spec.n < 2 * std::max<std::size_t>(spec.clients, 1)) throw std::invalid_argument("generate_synthetic: need N >= 2G");
  auto rng = make_rng(spec.seed, 2);
  std::normal_distribution<double> gauss;
  const double half = spec.side / 2.0;
  std::vector<LabeledSample> samples;
  samples.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const int y = i % 2 ? 1 : -1;
    Vector x(static_cast<Eigen::Index>(spec.dim));
    for (auto& v : x) v = y * half + gauss(rng);
    samples.push_back({std::move(x), y});
  }
  return DatasetView(std::move(samples), spec.dim);
}

std::vector<DatasetView> generate_synthetic_clients(const SyntheticSpec& spec, double shift) {
  if (spec.clients == 0) throw std::invalid_argument("generate_synthetic_clients: need at least one client");
  const auto sizes = allocate(spec.n, std::vector<double>(spec.clients, 1.0 / static_cast<double>(spec.clients)));
  std::vector<DatasetView> out;
  for (std::size_t g = 0; g < spec.clients; ++g) {
    SyntheticSpec local = spec;
    local.n = sizes[g];
    local.clients = 1;
    local.seed = spec.seed * 1000003ULL + g;
    auto base = generate_synthetic(local);
    std::vector<LabeledSample> samples = base.samples();
    for (auto& s : samples) {
      if (s.y > 0) s.x.array() += shift * static_cast<double>(g);
    }
    out.emplace_back(std::move(samples), spec.dim);
  }
  return out;
}

std::pair<DatasetView, DatasetView> train_test_split(const DatasetView& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train_test_split: fraction must lie in (0, 1)");
  auto rng = make_rng(seed, 3);
  auto [neg, pos] = class_indices(data);
  std::vector<std::size_t> train, test;
  for (auto* cls : {&neg, &pos}) {
    std::shuffle(cls->begin(), cls->end(), rng);
    const auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(cls->size())));
    train.insert(train.end(), cls->begin(), cls->begin() + static_cast<std::ptrdiff_t>(cut));
    test.insert(test.end(), cls->begin() + static_cast<std::ptrdiff_t>(cut), cls->end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {data.subset(train), data.subset(test)};
}

std::vector<std::pair<DatasetView, DatasetView>> stratified_folds(const DatasetView& data, std::size_t k,
                                                                  std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_folds: need at least two folds");
  if (data.size() < k) throw std::invalid_argument("stratified_folds: fewer samples than folds");
  auto rng = make_rng(seed, 4);
  auto [neg, pos] = class_indices(data);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::vector<std::size_t> fold_of(data.size());
  std::size_t f = 0;
  for (const auto* cls : {&neg, &pos}) {
    for (std::size_t i : *cls) {
      fold_of[i] = f;
      f = (f + 1) % k;
    }
  }
  std::vector<std::pair<DatasetView, DatasetView>> folds;
  for (std::size_t fold = 0; fold < k; ++fold) {
    std::vector<std::size_t> train, val;
    for (std::size_t i = 0; i < data.size(); ++i) (fold_of[i] == fold ? val : train).push_back(i);
    folds.emplace_back(data.subset(train), data.subset(val));
  }
  return folds;
}

DatasetView concatenate(const std::vector<DatasetView>& parts) {
  if (parts.empty()) return {};
  std::vector<LabeledSample> all;
  for (const auto& p : parts) {
    if (p.dim() != parts[0].dim()) throw std::invalid_argument("concatenate: dimension mismatch");
    all.insert(all.end(), p.begin(), p.end());
  }
  return DatasetView(std::move(all), parts[0].dim());
}

}  // namespace fdrsvm::data
