#pragma once

// Dense value containers used across the library. All storage is double
// precision and row-major; every reduction runs sequentially in ascending
// index order so results are reproducible bit-for-bit.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "wbc/errors.hpp"

namespace wbc {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// H x W x C activation grid, index = (p * W + q) * C + c.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
  Tensor3(std::size_t height, std::size_t width, std::size_t channels,
          std::vector<double> values);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t locations() const { return height_ * width_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(std::size_t p, std::size_t q, std::size_t c) {
    return values_[(p * width_ + q) * channels_ + c];
  }
  double operator()(std::size_t p, std::size_t q, std::size_t c) const {
    return values_[(p * width_ + q) * channels_ + c];
  }

  /// Channel vector at flat location index (p * W + q).
  std::span<double> pixel(std::size_t loc) {
    return {values_.data() + loc * channels_, channels_};
  }
  std::span<const double> pixel(std::size_t loc) const {
    return {values_.data() + loc * channels_, channels_};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_shape(const Tensor3& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> values_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
bool all_finite(std::span<const double> a);

/// ||a - b|| / max(||a||, ||b||); zero when both are zero.
double relative_error(std::span<const double> a, std::span<const double> b);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central-difference gradient of `f` at `x`. Throws OracleError naming the
/// coordinate whose perturbed evaluation was not finite.
Vector finite_diff_grad(const ScalarFunction& f, std::span<const double> x, double eps);

}  // namespace wbc
