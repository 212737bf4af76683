#pragma once

#include "ssm/numeric/grad.hpp"
#include "ssm/numeric/rng.hpp"
#include "ssm/numeric/tape.hpp"
#include "ssm/set_model/config.hpp"
#include "ssm/set_model/feature_set.hpp"

namespace ssm {

/// Per-item feed-forward network W2 * leaky_relu(W1 x + b1) + b2.
struct FfnParams {
  GradSlot w1;  // hidden x d
  GradSlot b1;  // 1 x hidden
  GradSlot w2;  // d x hidden
  GradSlot b2;  // 1 x d
};

/// Self-attention block. The per-head query/key/value projections (d_g x d
/// each) are stored stacked: rows [j*d_g, (j+1)*d_g) belong to head j.
struct EncoderParams {
  GradSlot query;  // (h*d_g) x d
  GradSlot key;    // (h*d_g) x d
  GradSlot value;  // (h*d_g) x d
  GradSlot merge;  // d x (h*d_g), the head-merge projection
  FfnParams ffn;
};

// Gaussian weights with std 1/sqrt(fan_in); zero biases.
GradSlot init_weight(SeededRng& rng, std::size_t rows, std::size_t cols);
FfnParams init_ffn(SeededRng& rng, std::size_t d, std::size_t hidden);
EncoderParams init_encoder(SeededRng& rng, const ModelConfig& cfg);

// Throws DimensionError unless `x` has `cols` columns.
void require_width(const Matrix& x, std::size_t cols, const char* op);

// Tape-level forward passes. Parameters are bound to the tape of `x`.
Var input_project(Var raw, const GradSlot& w_in);
Var ffn(Var x, const FfnParams& p);
Var encoder(Var x, const EncoderParams& p, std::size_t heads);

// Value-level forward passes; labels and set id are carried through.
FeatureSet input_project(const FeatureSet& raw, const GradSlot& w_in);
FeatureSet ffn(const FeatureSet& x, const FfnParams& p);
FeatureSet encoder(const FeatureSet& x, const EncoderParams& p, std::size_t heads);

}  // namespace ssm
