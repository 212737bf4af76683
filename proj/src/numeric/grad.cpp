#include "ssm/numeric/grad.hpp"

#include <algorithm>
#include <cmath>

#include "ssm/errors.hpp"

namespace ssm {

Matrix finite_diff_grad(const ScalarFn& f, const Matrix& theta, double eps) {
  Matrix grad(theta.rows(), theta.cols());
  Matrix probe = theta;
  for (std::size_t r = 0; r < theta.rows(); ++r) {
    for (std::size_t c = 0; c < theta.cols(); ++c) {
      const double original = probe(r, c);
      probe(r, c) = original + eps;
      const double up = f(probe);
      probe(r, c) = original - eps;
      const double down = f(probe);
      probe(r, c) = original;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw OracleError("finite_diff_grad: non-finite value at coordinate (" +
                          std::to_string(r) + ", " + std::to_string(c) + ")");
      }
      grad(r, c) = (up - down) / (2.0 * eps);
    }
  }
  return grad;
}

double relative_error(const Matrix& a, const Matrix& b, double floor) {
  const double diff = frobenius_norm(sub(a, b));
  const double scale = std::max({frobenius_norm(a), frobenius_norm(b), floor});
  return diff / scale;
}

}  // namespace ssm
