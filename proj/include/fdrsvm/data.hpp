// Dataset ingestion, normalization, client partitioning, corruption schemes
// and the synthetic Gaussian generator.

#pragma once

#include "fdrsvm/core.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fdrsvm::data {

struct RawTable {
  std::vector<std::string> feature_names;
  std::string label_name;
  std::vector<Vector> rows;
  std::vector<int> labels;      // mapped to -1 / +1
  std::string negative_label;   // raw value mapped to -1
  std::string positive_label;   // raw value mapped to +1

  std::size_t size() const { return rows.size(); }
  std::size_t dim() const { return feature_names.size(); }
  DatasetView view() const;
};

class CsvError : public std::runtime_error {
 public:
  enum class Kind { Io, Malformed, NonNumeric, UnknownLabel, MissingColumn, Empty };
  CsvError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct CsvOptions {
  std::string label_column;  // header name; without a header, the 0-based column index
  std::string positive_label;  // empty: the larger of exactly two distinct values
  bool has_header = true;
};

/// Comma-separated, first row header (unless disabled), numeric features.
RawTable load_csv(const std::string& path, const CsvOptions& options);
RawTable parse_csv(std::istream& in, const CsvOptions& options, const std::string& source = "<stream>");

/// Per-feature min-max scaling fitted on training rows. Constant features map
/// to 0 and transformed values are clipped into [0, 1].
class MinMaxScaler {
 public:
  static MinMaxScaler fit(const DatasetView& train);
  /// Rebuilds a fitted scaler from stored bounds.
  static MinMaxScaler from_bounds(Vector lo, Vector hi);
  DatasetView apply(const DatasetView& data) const;
  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }

 private:
  Vector lo_, hi_;
};

/// Appends a constant 1 feature so linear models get an intercept.
DatasetView with_bias(const DatasetView& data);

enum class PartitionScheme { Even, ClientImbalance, ClassImbalance, ClientPlusClass, LabelNoise };

std::string to_string(PartitionScheme scheme);
PartitionScheme parse_partition_scheme(const std::string& text);

struct PartitionPlan {
  PartitionScheme scheme = PartitionScheme::Even;
  std::size_t clients = 4;
  std::vector<double> client_fractions;  // ClientImbalance / ClientPlusClass
  std::vector<double> class_fractions;   // {label -1, label +1}; ClassImbalance / ClientPlusClass
  double noise_rate = 0.0;               // LabelNoise
  std::uint64_t seed = 0;

  void validate() const;
};

struct PartitionResult {
  std::vector<DatasetView> clients;
  std::size_t kept_negative = 0;  // achieved class counts after any downsampling
  std::size_t kept_positive = 0;
  std::size_t flipped = 0;        // labels flipped by LabelNoise
};

/// Seeded split of a training set into client datasets. Throws
/// std::invalid_argument when the plan cannot give every client a sample.
PartitionResult partition(const DatasetView& data, const PartitionPlan& plan);

/// Largest-remainder integer sizes summing to total.
std::vector<std::size_t> allocate(std::size_t total, const std::vector<double>& fractions);

struct SyntheticSpec {
  std::size_t n = 400;
  std::size_t dim = 2;
  std::size_t clients = 4;
  double side = 2.4;  // hypercube side; class means sit at opposite vertices
  std::uint64_t seed = 0;
};

/// Balanced two-class Gaussian data: unit variance, means at -side/2 * 1
/// (label -1) and +side/2 * 1 (label +1).
DatasetView generate_synthetic(const SyntheticSpec& spec);

/// One dataset per client of roughly n / clients samples each; client g's
/// positive mean is additionally moved by g * shift along every coordinate.
std::vector<DatasetView> generate_synthetic_clients(const SyntheticSpec& spec, double shift);

/// Stratified shuffle split; the first part gets round(train_fraction * n_c)
/// samples of each class c.
std::pair<DatasetView, DatasetView> train_test_split(const DatasetView& data, double train_fraction, std::uint64_t seed);

/// Stratified k-fold: (train, validation) pairs.
std::vector<std::pair<DatasetView, DatasetView>> stratified_folds(const DatasetView& data, std::size_t k,
                                                                  std::uint64_t seed);

/// Concatenation of several views of the same dimension.
DatasetView concatenate(const std::vector<DatasetView>& parts);

}  // namespace fdrsvm::data
