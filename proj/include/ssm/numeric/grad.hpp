#pragma once

#include <functional>

#include "ssm/numeric/matrix.hpp"

namespace ssm {

/// A trainable parameter block and its accumulated gradient.
struct GradSlot {
  Matrix value;
  Matrix grad;

  GradSlot() = default;
  explicit GradSlot(Matrix v) : value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad = Matrix(value.rows(), value.cols()); }
};

using ScalarFn = std::function<double(const Matrix&)>;

// Central-difference gradient of `f` at `theta`, one coordinate at a time.
// Throws OracleError naming the coordinate if f is non-finite at a probe.
Matrix finite_diff_grad(const ScalarFn& f, const Matrix& theta, double eps = 1e-6);

// ||a - b|| / max(||a||, ||b||), with an absolute floor so that two
// all-zero gradients compare as equal.
double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-10);

}  // namespace ssm
