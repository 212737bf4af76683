#include "ssm/numeric/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ssm/errors.hpp"

namespace ssm {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape_string() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + a.shape_string() + " * " + b.shape_string());
  }
  const std::size_t n = a.rows(), m = b.cols(), inner = a.cols();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.row(i).data();
    const double* ai = a.row(i).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = ai[k];
      const double* bk = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: " + a.shape_string() + " * (" + b.shape_string() + ")^T");
  }
  const std::size_t n = a.rows(), m = b.rows(), inner = a.cols();
  Matrix c(n, m);
  // Four independent accumulators per step; each entry is still summed in
  // ascending k, so results match the plain dot-product loop bit for bit.
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.row(i).data();
    double* ci = c.row(i).data();
    std::size_t j = 0;
    for (; j + 4 <= m; j += 4) {
      const double* b0 = b.row(j).data();
      const double* b1 = b0 + inner;
      const double* b2 = b1 + inner;
      const double* b3 = b2 + inner;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (std::size_t k = 0; k < inner; ++k) {
        const double x = ai[k];
        s0 += x * b0[k];
        s1 += x * b1[k];
        s2 += x * b2[k];
        s3 += x * b3[k];
      }
      ci[j] = s0;
      ci[j + 1] = s1;
      ci[j + 2] = s2;
      ci[j + 3] = s3;
    }
    for (; j < m; ++j) {
      const double* bj = b.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += ai[k] * bj[k];
      ci[j] = acc;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: (" + a.shape_string() + ")^T * " + b.shape_string());
  }
  const std::size_t n = a.cols(), m = b.cols(), inner = a.rows();
  Matrix c(n, m);
  for (std::size_t k = 0; k < inner; ++k) {
    const double* ak = a.row(k).data();
    const double* bk = b.row(k).data();
    for (std::size_t i = 0; i < n; ++i) {
      const double aki = ak[i];
      double* ci = c.row(i).data();
      for (std::size_t j = 0; j < m; ++j) ci[j] += aki * bk[j];
    }
  }
  return c;
}

void matmul_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols()) {
    throw DimensionError("matmul_acc: " + c.shape_string() + " += " + a.shape_string() + " * " + b.shape_string());
  }
  const std::size_t n = a.rows(), m = b.cols(), inner = a.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.row(i).data();
    const double* ai = a.row(i).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = ai[k];
      const double* bk = b.row(k).data();
      for (std::size_t j = 0; j < m; ++j) ci[j] += aik * bk[j];
    }
  }
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols()) {
    throw DimensionError("matmul_tn_acc: " + c.shape_string() + " += (" + a.shape_string() + ")^T * " +
                         b.shape_string());
  }
  const std::size_t n = a.cols(), m = b.cols(), inner = a.rows();
  for (std::size_t k = 0; k < inner; ++k) {
    const double* ak = a.row(k).data();
    const double* bk = b.row(k).data();
    for (std::size_t i = 0; i < n; ++i) {
      const double aki = ak[i];
      double* ci = c.row(i).data();
      for (std::size_t j = 0; j < m; ++j) ci[j] += aki * bk[j];
    }
  }
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix c = a;
  c += b;
  return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] -= bd[i];
  return c;
}

Matrix scale(const Matrix& a, double s) {
  Matrix c = a;
  c *= s;
  return c;
}

Matrix relu_clip(const Matrix& a) {
  Matrix c = a;
  for (double& v : c.data()) v = v < 0.0 ? 0.0 : v;  // NaN passes through
  return c;
}

Matrix leaky_relu(const Matrix& a, double slope) {
  if (!(slope >= 0.0 && slope < 1.0)) {
    throw ConfigError("leaky_relu: slope must lie in [0, 1), got " + std::to_string(slope));
  }
  Matrix c = a;
  for (double& v : c.data()) v = v < 0.0 ? slope * v : v;
  return c;
}

Matrix softmax_row(const Matrix& a) {
  Matrix c = a;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    auto r = c.row(i);
    if (r.empty()) continue;
    const double mx = *std::max_element(r.begin(), r.end());
    double total = 0.0;
    for (double& v : r) {
      v = std::exp(v - mx);
      total += v;
    }
    for (double& v : r) v /= total;
  }
  return c;
}

Matrix select_rows(const Matrix& a, std::span<const std::size_t> indices) {
  Matrix c(indices.size(), a.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.rows()) {
      throw DimensionError("select_rows: row " + std::to_string(indices[i]) + " out of range for " +
                           a.shape_string());
    }
    std::copy_n(a.row(indices[i]).begin(), a.cols(), c.row(i).begin());
  }
  return c;
}

Matrix concat_rows(const Matrix& top, const Matrix& bottom) {
  if (top.empty()) return bottom;
  if (bottom.empty()) return top;
  if (top.cols() != bottom.cols()) {
    throw DimensionError("concat_rows: " + top.shape_string() + " over " + bottom.shape_string());
  }
  Matrix c(top.rows() + bottom.rows(), top.cols());
  std::copy(top.data().begin(), top.data().end(), c.data().begin());
  std::copy(bottom.data().begin(), bottom.data().end(), c.data().begin() + top.size());
  return c;
}

bool all_finite(const Matrix& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

double frobenius_norm(const Matrix& a) {
  double total = 0.0;
  for (double v : a.data()) total += v * v;
  return std::sqrt(total);
}

}  // namespace ssm
