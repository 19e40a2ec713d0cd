#include "wbc/part_mask.hpp"

#include <cmath>
#include <string>

namespace wbc {

PartMask::PartMask(std::size_t height, std::size_t width, double fill)
    : PartMask(height, width, std::vector<double>(height * width, fill)) {}

PartMask::PartMask(std::size_t height, std::size_t width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height == 0 || width == 0) throw DimensionError("part mask must be non-empty");
  if (values_.size() != height * width)
    throw DimensionError("part mask value count " + std::to_string(values_.size()) +
                         " does not match " + std::to_string(height) + "x" +
                         std::to_string(width));
  for (double v : values_)
    if (!(v >= 0.0 && v <= 1.0)) throw Error("part mask value outside [0, 1]");
}

}  // namespace wbc
