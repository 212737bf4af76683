#pragma once

#include <span>
#include <vector>

#include "ssm/numeric/tape.hpp"

// Differentiable operations on tape variables. Each op computes its value
// with the plain Matrix kernels and records an exact backward rule.
namespace ssm::ad {

Var matmul(Var a, Var b);
// a * b^T. With items stored as rows, `matmul_nt(X, W)` applies x -> W x to
// every item.
Var matmul_nt(Var a, Var b);

Var add(Var a, Var b);
// Adds a 1 x cols row vector to every row of `a`.
Var add_row(Var a, Var row);
Var sub(Var a, Var b);
Var scale(Var a, double s);

Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var softmax_rows(Var a);
// Elementwise log(1 + exp(a)), stable for large |a|.
Var softplus(Var a);

Var slice_cols(Var a, std::size_t begin, std::size_t width);
Var concat_cols(std::span<const Var> parts);

// 1x1 mean of all entries.
Var mean_all(Var a);
// 1 x cols mean over rows.
Var mean_rows(Var a);

// Packs 1x1 scalars row-major into a rows x cols matrix.
Var stack_scalars(std::span<const Var> scalars, std::size_t rows, std::size_t cols);

// Mean over rows j of -log softmax(S[j])[j]. With `symmetric`, averages the
// row-wise and column-wise terms.
Var kpair_set_loss(Var scores, bool symmetric = false);

}  // namespace ssm::ad
