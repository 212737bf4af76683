#pragma once

#include <utility>
#include <vector>

#include "ssm/numeric/grad.hpp"
#include "ssm/numeric/rng.hpp"
#include "ssm/numeric/tape.hpp"
#include "ssm/set_model/config.hpp"
#include "ssm/set_model/encoder.hpp"
#include "ssm/set_model/feature_set.hpp"

namespace ssm {

/// Weights of one cross-set layer, shared by both directions of the
/// transformation. Head projections are stacked like EncoderParams: rows
/// [j*d_g, (j+1)*d_g) of each theta belong to head j.
///
/// The attention-based g uses theta1 (reference), theta2 (keys) and theta3
/// (values). The affinity-based g uses theta1 and theta2 only; theta3 stays
/// empty.
struct CrossSetParams {
  GradSlot theta1;  // (h*d_g) x d
  GradSlot theta2;  // (h*d_g) x d
  GradSlot theta3;  // (h*d_g) x d, attention variant only
  GradSlot merge;   // d x (h*d_g)
  FfnParams ffn;    // applied to each set before it enters g

  Variant variant() const { return theta3.value.empty() ? Variant::Affinity : Variant::Attention; }
};

/// One head's projections, each d_g x d.
struct HeadParams {
  Matrix theta1;
  Matrix theta2;
  Matrix theta3;  // empty for the affinity variant
};

/// Encoder / cross-set stack, run in alternation for i = 0..L-1.
struct StackParams {
  std::vector<EncoderParams> encoders;
  std::vector<CrossSetParams> cross_layers;
  // Only populated by the untie_directions mutation: weights for the second
  // direction of each layer.
  std::vector<CrossSetParams> mirrored;
};

CrossSetParams init_cross_set(SeededRng& rng, const ModelConfig& cfg);
HeadParams head_params(const CrossSetParams& p, std::size_t head, std::size_t d_g);

// Tape-level forward passes.
//
// Attention-based g for one head, given the projected reference items
// (N x d_g), projected keys and values of the other set (M x d_g):
//   out_n = (1/M) sum_m relu(<q_n, k_m> / sqrt(d_g)) v_m
Var relu_attention(Var queries, Var keys, Var values);
// Affinity-based g for one head from the projected sets:
//   out_n = (xbar_n + (1/M) sum_m relu(<xbar_n, ybar_m> / sqrt(d_g)) ybar_m) / 2
Var relu_affinity(Var xbar, Var ybar);

Var multihead_g(Var x, Var y, const CrossSetParams& p, std::size_t heads);

// Projections of one set through a layer's thetas, computed after its FFN.
// `key` and `value` serve when the set is the other side of g; `value` is
// the key itself for the affinity variant.
struct GProjections {
  Var query;
  Var key;
  Var value;
};
GProjections project_for_g(Var f, const CrossSetParams& p);
// multihead_g from the query projections of the reference set and the
// key/value projections of the other set, both taken from `p`.
Var multihead_g(Var query, Var key, Var value, const CrossSetParams& p, std::size_t heads);
// (X + g(ffn X, ffn Y), Y + g(ffn Y, ffn X)). `mirror`, when given, supplies
// the weights for the second direction instead of `p`.
std::pair<Var, Var> cross_set_layer(Var x, Var y, const CrossSetParams& p, std::size_t heads,
                                    const CrossSetParams* mirror = nullptr);
std::pair<Var, Var> extract_features(Var x, Var y, const StackParams& stack, std::size_t heads);

// Value-level forward passes. Empty sets are rejected by FeatureSet itself;
// width mismatches throw DimensionError.
Matrix g_attention(const FeatureSet& x, const FeatureSet& y, const HeadParams& head);
Matrix g_affinity(const FeatureSet& x, const FeatureSet& y, const HeadParams& head);
FeatureSet multihead_g(const FeatureSet& x, const FeatureSet& y, const CrossSetParams& p, std::size_t heads);
std::pair<FeatureSet, FeatureSet> cross_set_layer(const FeatureSet& x, const FeatureSet& y,
                                                  const CrossSetParams& p, std::size_t heads,
                                                  const CrossSetParams* mirror = nullptr);
std::pair<FeatureSet, FeatureSet> extract_features(const FeatureSet& x, const FeatureSet& y,
                                                   const StackParams& stack, std::size_t heads);

}  // namespace ssm
