#include "wbc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace wbc {

namespace {

void require_positive(std::size_t n, const char* what) {
  if (n == 0) throw DimensionError(std::string(what) + " must be positive");
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {
  require_positive(rows, "matrix rows");
  require_positive(cols, "matrix cols");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  require_positive(rows, "matrix rows");
  require_positive(cols, "matrix cols");
  if (values_.size() != rows * cols)
    throw DimensionError("matrix value count " + std::to_string(values_.size()) +
                         " != " + std::to_string(rows) + "x" + std::to_string(cols));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Tensor3::Tensor3(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : height_(height), width_(width), channels_(channels),
      values_(height * width * channels, fill) {
  require_positive(height, "tensor height");
  require_positive(width, "tensor width");
  require_positive(channels, "tensor channels");
}

Tensor3::Tensor3(std::size_t height, std::size_t width, std::size_t channels,
                 std::vector<double> values)
    : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
  require_positive(height, "tensor height");
  require_positive(width, "tensor width");
  require_positive(channels, "tensor channels");
  if (values_.size() != height * width * channels)
    throw DimensionError("tensor value count " + std::to_string(values_.size()) +
                         " does not match shape");
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionError("relative_error: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()));
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  const double scale = std::max({norm2(a), norm2(b), 1e-300});
  return std::sqrt(diff) / scale;
}

Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> x, double eps) {
  if (!(eps > 0.0)) throw Error("finite_diff_grad: eps must be positive");
  Vector probe(x.begin(), x.end());
  Vector grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw OracleError("finite_diff_grad: non-finite value at index " + std::to_string(i), i);
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace wbc
