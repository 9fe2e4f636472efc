#include "fdrsvm/core.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fdrsvm {

NormKind dual_of(NormKind kind) { return kind == NormKind::L1 ? NormKind::LInf : NormKind::L1; }

std::string_view to_string(NormKind kind) { return kind == NormKind::L1 ? "L1" : "LInf"; }

NormKind parse_norm(std::string_view text) {
  if (text == "L1" || text == "l1") return NormKind::L1;
  if (text == "LInf" || text == "linf" || text == "Linf") return NormKind::LInf;
  throw std::invalid_argument("unknown norm '" + std::string(text) + "' (expected L1 or LInf)");
}

double norm(const Vector& v, NormKind kind) {
  if (v.size() == 0) return 0.0;
  return kind == NormKind::L1 ? v.lpNorm<1>() : v.lpNorm<Eigen::Infinity>();
}

double dual_norm(const Vector& v, NormKind kind) { return norm(v, dual_of(kind)); }

DatasetView::DatasetView(std::vector<LabeledSample> samples, std::size_t dim)
    : samples_(std::move(samples)), dim_(dim) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (static_cast<std::size_t>(s.x.size()) != dim_) {
      throw std::invalid_argument("sample " + std::to_string(i) + " has " + std::to_string(s.x.size()) +
                                  " features, expected " + std::to_string(dim_));
    }
    if (s.y != 1 && s.y != -1) {
      throw std::invalid_argument("sample " + std::to_string(i) + " has label " + std::to_string(s.y) +
                                  ", expected -1 or +1");
    }
  }
}

bool DatasetView::in_unit_box() const {
  for (const auto& s : samples_) {
    if (s.x.size() > 0 && (s.x.minCoeff() < 0.0 || s.x.maxCoeff() > 1.0)) return false;
  }
  return true;
}

std::size_t DatasetView::count_label(int label) const {
  std::size_t n = 0;
  for (const auto& s : samples_) n += (s.y == label);
  return n;
}

DatasetView DatasetView::subset(std::span<const std::size_t> indices) const {
  std::vector<LabeledSample> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(samples_.at(i));
  return DatasetView(std::move(out), dim_);
}

static void check_dim(const Vector& w, const Vector& x) {
  if (w.size() != x.size()) {
    throw std::invalid_argument("dimension mismatch: model has " + std::to_string(w.size()) + " weights, sample has " +
                                std::to_string(x.size()) + " features");
  }
}

double hinge_loss(const Vector& w, const LabeledSample& s) {
  check_dim(w, s.x);
  return std::max(0.0, 1.0 - s.y * w.dot(s.x));
}

double hinge_loss(const GlobalModel& model, const LabeledSample& s) { return hinge_loss(model.w, s); }

double transport_cost(const LabeledSample& a, const LabeledSample& b, const TransportCostSpec& spec) {
  check_dim(a.x, b.x);
  double cost = norm(a.x - b.x, spec.norm);
  if (a.y != b.y) cost += spec.kappa;
  return cost;
}

double empirical_risk(const Vector& w, const DatasetView& data) {
  if (data.empty()) throw std::invalid_argument("empirical_risk: empty dataset");
  double sum = 0.0;
  for (const auto& s : data) sum += hinge_loss(w, s);
  return sum / static_cast<double>(data.size());
}

int predict(const Vector& w, const Vector& x) {
  check_dim(w, x);
  return w.dot(x) >= 0.0 ? 1 : -1;
}

Metrics metrics_from_confusion(const Confusion& c) {
  Metrics m;
  m.confusion = c;
  const double denom = 2.0 * c.tp + c.fp + c.fn;
  m.f1 = denom > 0 ? 2.0 * c.tp / denom : 0.0;

  // Classes absent from the evaluated data do not enter the average.
  double acc_sum = 0.0;
  int classes = 0;
  if (c.tp + c.fn > 0) {
    acc_sum += static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    ++classes;
  }
  if (c.tn + c.fp > 0) {
    acc_sum += static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    ++classes;
  }
  m.mccr = classes > 0 ? acc_sum / classes : 0.0;
  return m;
}

Metrics evaluate(const GlobalModel& model, const DatasetView& data) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  Confusion c;
  for (const auto& s : data) {
    const int pred = predict(model.w, s.x);
    if (s.y == 1) {
      (pred == 1 ? c.tp : c.fn) += 1;
    } else {
      (pred == 1 ? c.fp : c.tn) += 1;
    }
  }
  return metrics_from_confusion(c);
}

}  // namespace fdrsvm
