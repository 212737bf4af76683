#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ssm/numeric/matrix.hpp"

namespace ssm {

/// An ordered list of item feature vectors (one per row) with optional
/// per-item integer labels: category ids for outfits, identity ids for
/// re-identification scenes.
class FeatureSet {
 public:
  // Throws PreconditionError for an empty set or a label count that does not
  // match the item count.
  explicit FeatureSet(Matrix items, std::vector<int> labels = {}, std::uint64_t set_id = 0);

  const Matrix& items() const { return items_; }
  const std::vector<int>& labels() const { return labels_; }
  bool has_labels() const { return !labels_.empty(); }
  std::uint64_t set_id() const { return set_id_; }

  std::size_t size() const { return items_.rows(); }
  std::size_t width() const { return items_.cols(); }

  // Items (and labels) reordered so that row i of the result is row order[i].
  FeatureSet permuted(std::span<const std::size_t> order) const;

 private:
  Matrix items_;
  std::vector<int> labels_;
  std::uint64_t set_id_ = 0;
};

// Concatenation of the item lists, keeping labels when both sides have them.
FeatureSet union_of(const FeatureSet& a, const FeatureSet& b, std::uint64_t set_id = 0);

}  // namespace ssm
