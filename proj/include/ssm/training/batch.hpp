#pragma once

#include <cstddef>
#include <vector>

#include "ssm/set_model/feature_set.hpp"

namespace ssm {

/// A correct (reference, candidate) pair of sets.
struct SetPair {
  FeatureSet x;
  FeatureSet y;
};

/// K correct pairs. Cross-pairing them gives every reference K candidates
/// of which exactly one, the diagonal, is correct.
struct CandidateBatch {
  std::vector<SetPair> pairs;

  std::size_t k() const { return pairs.size(); }
  // Throws PreconditionError when K < 2.
  void validate() const;
};

}  // namespace ssm
