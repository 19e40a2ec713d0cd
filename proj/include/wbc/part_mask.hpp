#pragma once

#include <cstddef>
#include <vector>

#include "wbc/tensor.hpp"

namespace wbc {

/// H x W saliency weights for one part. Generated masks lie in (0, 1);
/// the closed interval is accepted because a saturated sigmoid rounds to
/// an endpoint in double precision.
class PartMask {
 public:
  PartMask() = default;
  PartMask(std::size_t height, std::size_t width, double fill);
  PartMask(std::size_t height, std::size_t width, std::vector<double> values);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t locations() const { return values_.size(); }

  double operator()(std::size_t p, std::size_t q) const { return values_[p * width_ + q]; }
  double at(std::size_t loc) const { return values_[loc]; }
  const std::vector<double>& values() const { return values_; }

  bool matches(const Tensor3& f) const {
    return height_ == f.height() && width_ == f.width();
  }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

}  // namespace wbc
