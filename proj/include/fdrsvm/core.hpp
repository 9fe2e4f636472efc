// Domain types, losses, transport cost and classification metrics shared by
// every other part of the library.

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace fdrsvm {

using Vector = Eigen::VectorXd;

enum class NormKind { L1, LInf };

NormKind dual_of(NormKind kind);
std::string_view to_string(NormKind kind);
NormKind parse_norm(std::string_view text);

/// ||v|| in the given norm.
double norm(const Vector& v, NormKind kind);

/// Dual norm: ||v||_inf for L1, ||v||_1 for LInf.
double dual_norm(const Vector& v, NormKind kind);

struct LabeledSample {
  Vector x;
  int y = 1;  // -1 or +1
};

/// Ordered, dimension-checked collection of samples. Every sample has exactly
/// dim() features and a label in {-1, +1}.
class DatasetView {
 public:
  DatasetView() = default;
  DatasetView(std::vector<LabeledSample> samples, std::size_t dim);

  std::size_t size() const { return samples_.size(); }
  std::size_t dim() const { return dim_; }
  bool empty() const { return samples_.empty(); }

  const LabeledSample& operator[](std::size_t i) const { return samples_[i]; }
  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }
  const std::vector<LabeledSample>& samples() const { return samples_; }

  /// True when every feature lies in [0, 1].
  bool in_unit_box() const;

  std::size_t count_label(int label) const;

  DatasetView subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<LabeledSample> samples_;
  std::size_t dim_ = 0;
};

struct GlobalModel {
  Vector w;

  static GlobalModel zeros(std::size_t dim) { return {Vector::Zero(static_cast<Eigen::Index>(dim))}; }
};

struct TransportCostSpec {
  NormKind norm = NormKind::L1;
  double kappa = 1.0;  // label flip cost, >= 0
};

double hinge_loss(const Vector& w, const LabeledSample& s);
double hinge_loss(const GlobalModel& model, const LabeledSample& s);

/// ||a.x - b.x|| + kappa * [a.y != b.y]
double transport_cost(const LabeledSample& a, const LabeledSample& b, const TransportCostSpec& spec);

/// Mean hinge loss over the dataset.
double empirical_risk(const Vector& w, const DatasetView& data);

/// Predicted label; a zero score maps to +1.
int predict(const Vector& w, const Vector& x);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
};

struct Metrics {
  double f1 = 0.0;
  double mccr = 0.0;  // macro-averaged per-class accuracy
  Confusion confusion;
};

Metrics metrics_from_confusion(const Confusion& c);
Metrics evaluate(const GlobalModel& model, const DatasetView& data);

}  // namespace fdrsvm
