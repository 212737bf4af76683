#include "ssm/set_model/feature_set.hpp"

#include "ssm/errors.hpp"

namespace ssm {

FeatureSet::FeatureSet(Matrix items, std::vector<int> labels, std::uint64_t set_id)
    : items_(std::move(items)), labels_(std::move(labels)), set_id_(set_id) {
  if (items_.rows() == 0 || items_.cols() == 0) throw PreconditionError("FeatureSet: a set needs at least one item");
  if (!labels_.empty() && labels_.size() != items_.rows()) {
    throw PreconditionError("FeatureSet: " + std::to_string(labels_.size()) + " labels for " +
                            std::to_string(items_.rows()) + " items");
  }
}

FeatureSet FeatureSet::permuted(std::span<const std::size_t> order) const {
  if (order.size() != size()) throw PreconditionError("FeatureSet::permuted: order length differs from set size");
  std::vector<int> labels;
  if (has_labels()) {
    labels.reserve(order.size());
    for (std::size_t i : order) labels.push_back(labels_.at(i));
  }
  return FeatureSet(select_rows(items_, order), std::move(labels), set_id_);
}

FeatureSet union_of(const FeatureSet& a, const FeatureSet& b, std::uint64_t set_id) {
  std::vector<int> labels;
  if (a.has_labels() && b.has_labels()) {
    labels = a.labels();
    labels.insert(labels.end(), b.labels().begin(), b.labels().end());
  }
  return FeatureSet(concat_rows(a.items(), b.items()), std::move(labels), set_id);
}

}  // namespace ssm
