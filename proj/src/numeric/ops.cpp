#include "ssm/numeric/ops.hpp"

#include <algorithm>
#include <cmath>

#include "ssm/errors.hpp"

namespace ssm::ad {

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw PreconditionError(std::string(op) + ": operands on different tapes");
}

Matrix relu_mask(const Matrix& x, const Matrix& g, double negative_slope) {
  Matrix out = g;
  auto xv = x.data();
  auto ov = out.data();
  // At exactly zero the plain ReLU takes subgradient 0.
  for (std::size_t i = 0; i < ov.size(); ++i) {
    if (!(xv[i] > 0.0)) ov[i] *= negative_slope;
  }
  return out;
}

double logsumexp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double x : v) total += std::exp(x - mx);
  return mx + std::log(total);
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  return a.tape().record(ssm::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(a)) t.accumulate(a, ssm::matmul_nt(g, b.value()));
    if (Matrix* gb = t.grad_sink(b)) ssm::matmul_tn_acc(a.value(), g, *gb);
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b, "matmul_nt");
  return a.tape().record(ssm::matmul_nt(a.value(), b.value()), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad(self);
    if (Matrix* ga = t.grad_sink(a)) ssm::matmul_acc(g, b.value(), *ga);
    if (Matrix* gb = t.grad_sink(b)) ssm::matmul_tn_acc(g, a.value(), *gb);
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  return a.tape().record(ssm::add(a.value(), b.value()), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row, "add_row");
  const Matrix& x = a.value();
  const Matrix& r = row.value();
  if (r.rows() != 1 || r.cols() != x.cols()) {
    throw DimensionError("add_row: " + x.shape_string() + " + row " + r.shape_string());
  }
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) dst[j] += r(0, j);
  }
  return a.tape().record(std::move(out), {a, row}, [a, row](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(a, g);
    if (t.needs_grad(row)) {
      Matrix colsum(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) colsum(0, j) += g(i, j);
      t.accumulate(row, colsum);
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  return a.tape().record(ssm::sub(a.value(), b.value()), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(a, g);
    if (t.needs_grad(b)) t.accumulate(b, ssm::scale(g, -1.0));
  });
}

Var scale(Var a, double s) {
  return a.tape().record(ssm::scale(a.value(), s), {a}, [a, s](Tape& t, std::uint32_t self) {
    t.accumulate(a, ssm::scale(t.grad(self), s));
  });
}

Var relu(Var a) {
  return a.tape().record(relu_clip(a.value()), {a}, [a](Tape& t, std::uint32_t self) {
    t.accumulate(a, relu_mask(a.value(), t.grad(self), 0.0));
  });
}

Var leaky_relu(Var a, double slope) {
  return a.tape().record(ssm::leaky_relu(a.value(), slope), {a}, [a, slope](Tape& t, std::uint32_t self) {
    t.accumulate(a, relu_mask(a.value(), t.grad(self), slope));
  });
}

Var softmax_rows(Var a) {
  return a.tape().record(softmax_row(a.value()), {a}, [a](Tape& t, std::uint32_t self) {
    const Matrix& s = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix da(s.rows(), s.cols());
    for (std::size_t i = 0; i < s.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < s.cols(); ++j) dot += g(i, j) * s(i, j);
      for (std::size_t j = 0; j < s.cols(); ++j) da(i, j) = s(i, j) * (g(i, j) - dot);
    }
    t.accumulate(a, da);
  });
}

Var softplus(Var a) {
  Matrix out = a.value();
  for (double& v : out.data()) v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
  return a.tape().record(std::move(out), {a}, [a](Tape& t, std::uint32_t self) {
    Matrix da = t.grad(self);
    auto x = a.value().data();
    auto d = da.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double sig = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i])) : std::exp(x[i]) / (1.0 + std::exp(x[i]));
      d[i] *= sig;
    }
    t.accumulate(a, da);
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t width) {
  const Matrix& x = a.value();
  if (begin + width > x.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + width) +
                         ") out of range for " + x.shape_string());
  }
  Matrix out(x.rows(), width);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < width; ++j) out(i, j) = x(i, begin + j);
  return a.tape().record(std::move(out), {a}, [a, begin, width](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad(self);
    Matrix da(a.rows(), a.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < width; ++j) da(i, begin + j) = g(i, j);
    t.accumulate(a, da);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw PreconditionError("concat_cols: no parts");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, offset + j) = v(i, j);
    offset += v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape().record(std::move(out), inputs, [inputs](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad(self);
    std::size_t off = 0;
    for (const Var& p : inputs) {
      const std::size_t w = p.cols();
      if (t.needs_grad(p)) {
        Matrix dp(g.rows(), w);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < w; ++j) dp(i, j) = g(i, off + j);
        t.accumulate(p, dp);
      }
      off += w;
    }
  });
}

Var mean_all(Var a) {
  const Matrix& x = a.value();
  if (x.empty()) throw PreconditionError("mean_all: empty matrix");
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  return a.tape().record(Matrix(1, 1, total * inv), {a}, [a, inv](Tape& t, std::uint32_t self) {
    t.accumulate(a, Matrix(a.rows(), a.cols(), t.grad(self)(0, 0) * inv));
  });
}

Var mean_rows(Var a) {
  const Matrix& x = a.value();
  if (x.rows() == 0) throw PreconditionError("mean_rows: no rows");
  Matrix out(1, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(0, j) += x(i, j);
  const double inv = 1.0 / static_cast<double>(x.rows());
  out *= inv;
  return a.tape().record(std::move(out), {a}, [a, inv](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad(self);
    Matrix da(a.rows(), a.cols());
    for (std::size_t i = 0; i < da.rows(); ++i)
      for (std::size_t j = 0; j < da.cols(); ++j) da(i, j) = g(0, j) * inv;
    t.accumulate(a, da);
  });
}

Var stack_scalars(std::span<const Var> scalars, std::size_t rows, std::size_t cols) {
  if (scalars.size() != rows * cols || scalars.empty()) {
    throw DimensionError("stack_scalars: " + std::to_string(scalars.size()) + " scalars for " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].rows() != 1 || scalars[i].cols() != 1) throw DimensionError("stack_scalars: non-scalar input");
    out.data()[i] = scalars[i].value()(0, 0);
  }
  std::vector<Var> inputs(scalars.begin(), scalars.end());
  return scalars.front().tape().record(std::move(out), inputs, [inputs](Tape& t, std::uint32_t self) {
    const Matrix& g = t.grad(self);
    for (std::size_t i = 0; i < inputs.size(); ++i) t.accumulate(inputs[i], Matrix(1, 1, g.data()[i]));
  });
}

Var kpair_set_loss(Var scores, bool symmetric) {
  const Matrix& s = scores.value();
  if (s.rows() != s.cols() || s.rows() == 0) {
    throw DimensionError("kpair_set_loss: score matrix must be square, got " + s.shape_string());
  }
  const std::size_t k = s.rows();
  const Matrix st = transpose(s);
  double row_loss = 0.0, col_loss = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    row_loss += logsumexp(s.row(j)) - s(j, j);
    if (symmetric) col_loss += logsumexp(st.row(j)) - s(j, j);
  }
  const double inv_k = 1.0 / static_cast<double>(k);
  const double loss = symmetric ? 0.5 * (row_loss + col_loss) * inv_k : row_loss * inv_k;
  return scores.tape().record(Matrix(1, 1, loss), {scores}, [scores, symmetric, inv_k](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)(0, 0);
    const Matrix& sv = scores.value();
    const std::size_t n = sv.rows();
    const double weight = (symmetric ? 0.5 : 1.0) * inv_k * g;
    Matrix ds(n, n);
    Matrix p = softmax_row(sv);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) ds(i, j) += weight * p(i, j);
      ds(i, i) -= weight;
    }
    if (symmetric) {
      Matrix pc = softmax_row(transpose(sv));  // pc(col, row)
      for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t r = 0; r < n; ++r) ds(r, c) += weight * pc(c, r);
        ds(c, c) -= weight;
      }
    }
    t.accumulate(scores, ds);
  });
}

}  // namespace ssm::ad
