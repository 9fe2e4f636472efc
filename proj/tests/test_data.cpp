#include <doctest.h>

#include "fdrsvm/data.hpp"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

using namespace fdrsvm;
using namespace fdrsvm::data;

namespace {

RawTable parse(const std::string& text, CsvOptions opts) {
  std::istringstream in(text);
  return parse_csv(in, opts);
}

CsvError::Kind error_kind(const std::string& text, CsvOptions opts) {
  try {
    parse(text, opts);
  } catch (const CsvError& e) {
    return e.kind();
  }
  FAIL("expected a CsvError");
  return CsvError::Kind::Io;
}

// Labels alternate so the classes are balanced; feature 0 encodes the index.
DatasetView indexed(std::size_t n, std::size_t positives) {
  std::vector<LabeledSample> s;
  for (std::size_t i = 0; i < n; ++i) {
    Vector x(1);
    x << static_cast<double>(i);
    s.push_back({x, i < positives ? 1 : -1});
  }
  return DatasetView(std::move(s), 1);
}

std::multiset<double> keys(const std::vector<DatasetView>& parts) {
  std::multiset<double> out;
  for (const auto& p : parts) {
    for (const auto& s : p) out.insert(s.x[0]);
  }
  return out;
}

}  // namespace

TEST_CASE("csv parsing maps labels and keeps feature order") {
  const auto t = parse("a,label,b\n1,0,2\n3,1,4.5\n", {"label", "", true});
  CHECK(t.size() == 2);
  CHECK(t.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(t.rows[1][1] == 4.5);
  CHECK(t.labels == std::vector<int>{-1, 1});
  CHECK(t.positive_label == "1");

  const auto explicit_pos = parse("x,y\n1,cat\n2,dog\n", {"y", "cat", true});
  CHECK(explicit_pos.labels == std::vector<int>{1, -1});

  const auto headerless = parse("0.5,1.5,0\n2,3,1\n", {"2", "", false});
  CHECK(headerless.dim() == 2);
  CHECK(headerless.labels == std::vector<int>{-1, 1});

  // numeric labels compare by value, not text
  const auto numeric = parse("x,y\n1,10\n2,9\n", {"y", "", true});
  CHECK(numeric.labels == std::vector<int>{1, -1});
}

TEST_CASE("csv errors are distinguishable") {
  using K = CsvError::Kind;
  CHECK(error_kind("a,y\n1,0\n2\n", {"y", "", true}) == K::Malformed);
  CHECK(error_kind("a,y\n1,0\nfoo,1\n", {"y", "", true}) == K::NonNumeric);
  CHECK(error_kind("a,y\n1,0\n2,1\n3,2\n", {"y", "", true}) == K::UnknownLabel);
  CHECK(error_kind("a,y\n1,0\n2,1\n3,2\n", {"y", "1", true}) == K::UnknownLabel);
  CHECK(error_kind("a,y\n1,0\n", {"label", "", true}) == K::MissingColumn);
  CHECK(error_kind("a,y\n", {"y", "", true}) == K::Empty);
  CHECK(error_kind("", {"y", "", true}) == K::Empty);
  try {
    parse("a,y\n1,0\n", {"target", "", true});
  } catch (const CsvError& e) {
    CHECK(std::string(e.what()).find("target") != std::string::npos);
  }
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", {"y", "", true}), CsvError);
}

TEST_CASE("min-max scaling uses training bounds") {
  std::vector<LabeledSample> train{{Vector::Constant(2, 0.0), 1}, {Vector::Constant(2, 0.0), -1}};
  train[0].x << 2.0, 5.0;
  train[1].x << 4.0, 5.0;
  const DatasetView tr(train, 2);
  const auto scaler = MinMaxScaler::fit(tr);
  const auto scaled = scaler.apply(tr);
  CHECK(scaled[0].x[0] == 0.0);
  CHECK(scaled[1].x[0] == 1.0);
  CHECK(scaled[0].x[1] == 0.0);  // constant feature

  std::vector<LabeledSample> test{{Vector::Constant(2, 0.0), 1}};
  test[0].x << 10.0, -3.0;
  const auto t = scaler.apply(DatasetView(test, 2));
  CHECK(t[0].x[0] == 1.0);
  CHECK(t.in_unit_box());

  const auto biased = with_bias(scaled);
  CHECK(biased.dim() == 3);
  CHECK(biased[1].x[2] == 1.0);
}

TEST_CASE("largest remainder allocation") {
  CHECK(allocate(400, {0.7, 0.15, 0.1, 0.05}) == std::vector<std::size_t>{280, 60, 40, 20});
  CHECK(allocate(10, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == std::vector<std::size_t>{4, 3, 3});
  CHECK(allocate(7, {0.5, 0.5}) == std::vector<std::size_t>{4, 3});
}

TEST_CASE("even partition is stratified") {
  const auto data = indexed(400, 200);
  PartitionPlan plan;
  plan.clients = 4;
  plan.seed = 3;
  const auto r = partition(data, plan);
  REQUIRE(r.clients.size() == 4);
  for (const auto& c : r.clients) {
    CHECK(c.size() == 100);
    CHECK(c.count_label(1) == 50);
  }
  CHECK(keys(r.clients) == keys({data}));
}

TEST_CASE("client imbalance sizes") {
  const auto data = indexed(400, 200);
  PartitionPlan plan;
  plan.scheme = PartitionScheme::ClientImbalance;
  plan.client_fractions = {0.7, 0.15, 0.1, 0.05};
  const auto r = partition(data, plan);
  std::vector<std::size_t> sizes;
  for (const auto& c : r.clients) sizes.push_back(c.size());
  CHECK(sizes == std::vector<std::size_t>{280, 60, 40, 20});
  CHECK(r.clients[3].count_label(1) == 10);
  CHECK(keys(r.clients) == keys({data}));
}

TEST_CASE("class imbalance downsamples toward the target ratio") {
  const auto data = indexed(400, 200);
  PartitionPlan plan;
  plan.scheme = PartitionScheme::ClassImbalance;
  plan.class_fractions = {0.9, 0.1};
  const auto r = partition(data, plan);
  CHECK(r.kept_negative == 200);
  CHECK(r.kept_positive == 22);
  std::size_t pos = 0, total = 0;
  for (const auto& c : r.clients) {
    pos += c.count_label(1);
    total += c.size();
  }
  CHECK(pos == 22);
  CHECK(total == 222);

  plan.scheme = PartitionScheme::ClientPlusClass;
  plan.client_fractions = {0.7, 0.15, 0.1, 0.05};
  const auto both = partition(data, plan);
  CHECK(both.clients[0].size() == allocate(222, plan.client_fractions)[0]);
}

TEST_CASE("label noise flips the requested count") {
  const auto data = indexed(400, 200);
  PartitionPlan plan;
  plan.scheme = PartitionScheme::LabelNoise;
  plan.noise_rate = 0.15;
  plan.seed = 9;
  const auto r = partition(data, plan);
  CHECK(r.flipped == 60);
  std::size_t changed = 0;
  for (const auto& c : r.clients) {
    for (const auto& s : c) {
      const int original = s.x[0] < 200 ? 1 : -1;
      changed += s.y != original;
    }
  }
  CHECK(changed == 60);
  CHECK(keys(r.clients) == keys({data}));
}

TEST_CASE("partition is a disjoint cover for every scheme and seed") {
  const auto data = indexed(97, 40);
  for (auto scheme : {PartitionScheme::Even, PartitionScheme::ClientImbalance, PartitionScheme::LabelNoise}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      PartitionPlan plan;
      plan.scheme = scheme;
      plan.clients = 3;
      plan.client_fractions = {0.5, 0.3, 0.2};
      plan.noise_rate = 0.1;
      plan.seed = seed;
      const auto r = partition(data, plan);
      CHECK(keys(r.clients) == keys({data}));
    }
  }
}

TEST_CASE("partition rejects infeasible plans") {
  const auto data = indexed(3, 1);
  PartitionPlan plan;
  plan.clients = 4;
  CHECK_THROWS_AS(partition(data, plan), std::invalid_argument);
  plan.clients = 2;
  plan.scheme = PartitionScheme::ClientImbalance;
  plan.client_fractions = {0.6, 0.6};
  CHECK_THROWS_AS(partition(data, plan), std::invalid_argument);
  plan.client_fractions = {1.0, 0.0};
  CHECK_THROWS_AS(partition(data, plan), std::invalid_argument);
  CHECK(parse_partition_scheme("LabelNoise") == PartitionScheme::LabelNoise);
  CHECK_THROWS(parse_partition_scheme("noise"));
}

TEST_CASE("synthetic generator") {
  SyntheticSpec spec;
  spec.n = 2000;
  spec.dim = 3;
  spec.seed = 5;
  const auto d = generate_synthetic(spec);
  CHECK(d.count_label(1) == 1000);
  Vector mean_pos = Vector::Zero(3), mean_neg = Vector::Zero(3);
  for (const auto& s : d) (s.y > 0 ? mean_pos : mean_neg) += s.x;
  mean_pos /= 1000.0;
  mean_neg /= 1000.0;
  const double tol = 3.0 / std::sqrt(1000.0);
  for (int p = 0; p < 3; ++p) {
    CHECK(std::abs(mean_pos[p] - 1.2) <= tol);
    CHECK(std::abs(mean_neg[p] + 1.2) <= tol);
  }
  const auto again = generate_synthetic(spec);
  CHECK(again[17].x == d[17].x);

  spec.n = 7;
  CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);

  spec.n = 400;
  const auto parts = generate_synthetic_clients(spec, 0.5);
  REQUIRE(parts.size() == 4);
  CHECK(parts[3].size() == 100);
}

TEST_CASE("train/test split and folds are stratified") {
  const auto data = indexed(100, 40);
  const auto [train, test] = train_test_split(data, 0.7, 1);
  CHECK(train.size() == 70);
  CHECK(train.count_label(1) == 28);
  CHECK(keys({train, test}) == keys({data}));

  const auto folds = stratified_folds(data, 5, 2);
  REQUIRE(folds.size() == 5);
  std::vector<DatasetView> vals;
  for (const auto& [tr, va] : folds) {
    CHECK(va.size() == 20);
    CHECK(va.count_label(1) == 8);
    CHECK(tr.size() == 80);
    vals.push_back(va);
  }
  CHECK(keys(vals) == keys({data}));
  CHECK(concatenate(vals).size() == 100);
}
