#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssm/cross_set/cross_set.hpp"
#include "ssm/numeric/grad.hpp"
#include "ssm/numeric/tape.hpp"
#include "ssm/set_model/config.hpp"
#include "ssm/set_model/encoder.hpp"
#include "ssm/set_model/feature_set.hpp"

namespace ssm {

/// Multiple cross-similarity weights: h subspace projections W_j (d_w x d,
/// stacked into (h*d_w) x d) and the 1 x h combination W_o.
struct CSParams {
  GradSlot proj;
  GradSlot combine;
};

/// Set-to-vector pooling for the baseline. Attention pooling uses every
/// block; mean pooling uses only `out`.
struct PoolParams {
  GradSlot seed;   // 1 x d
  GradSlot query;  // d x d
  GradSlot key;    // d x d
  GradSlot value;  // d x d
  GradSlot out;    // d x d
};

struct NamedBlock {
  std::string name;
  GradSlot* slot;
};

struct NamedConstBlock {
  std::string name;
  const GradSlot* slot;
};

/// Every trainable weight of a matching model.
///
/// Cross variants (attention, affinity) use `stack` (L encoders and L
/// cross-set layers) and `cs`. The baseline uses the encoders of `stack`
/// (no cross-set layers) and `pool`.
struct ModelParams {
  ModelConfig config;
  GradSlot input;  // d x d_in
  StackParams stack;
  CSParams cs;
  PoolParams pool;

  // Canonical block order, shared by serialization, the optimizer and the
  // gradient checker.
  std::vector<NamedBlock> blocks();
  std::vector<NamedConstBlock> blocks() const;
  std::size_t parameter_count() const;
  void zero_grads();
};

// Weights are N(0, 1/fan_in), biases zero; fully determined by (cfg, seed).
ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed);

// --- tape level ---------------------------------------------------------

// Cross-similarity of two already-projected sets (N x d_w and M x d_w):
// mean over all pairs of relu(<a, b> / sqrt(d_w)).
Var cross_similarity(Var a, Var b);
Var mcs(Var x, Var y, const CSParams& p, std::size_t heads);
Var baseline_pool(Var x, const PoolParams& p, PoolKind kind);

/// Builds score computations for many pairs on one tape.
///
/// The per-set part of the network (input projection and, for cross
/// variants, the first encoder; for the baseline, the whole set embedding)
/// is computed once per set by `stem` and reused across every pair the set
/// takes part in, as are the set's projections in the first cross-set
/// layer. Scores are bitwise identical to `model_score`.
class ScoreGraph {
 public:
  ScoreGraph(Tape& tape, const ModelParams& model);

  Var stem(const FeatureSet& raw);
  Var score(Var stem_x, Var stem_y);

 private:
  // The first cross-set layer's FFN and theta projections of a stem.
  const GProjections& projections(Var stem, const CrossSetParams& p);

  Tape& tape_;
  const ModelParams& model_;
  std::map<std::pair<std::uint32_t, const CrossSetParams*>, GProjections> projections_;
};

// --- value level --------------------------------------------------------

double cs(const FeatureSet& x, const FeatureSet& y, const Matrix& w);
double mcs(const FeatureSet& x, const FeatureSet& y, const CSParams& p, std::size_t heads);
// mcs after the cross-set feature extractor, from raw d_in-wide sets.
double model_score(const FeatureSet& x_raw, const FeatureSet& y_raw, const ModelParams& model);
Matrix baseline_pool(const FeatureSet& x, const PoolParams& p, PoolKind kind);
// Inner product of the pooled, encoded embeddings of both raw sets.
double baseline_score(const FeatureSet& x_raw, const FeatureSet& y_raw, const ModelParams& model);
// Dispatches on model.config.variant.
double score_pair(const FeatureSet& x_raw, const FeatureSet& y_raw, const ModelParams& model);

}  // namespace ssm
