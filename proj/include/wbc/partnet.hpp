#pragma once

// Salient part net: L independent branches, each a 1x1 convolution over
// channels followed by a sigmoid, yielding one saliency mask per part.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "wbc/part_mask.hpp"
#include "wbc/random.hpp"
#include "wbc/tensor.hpp"

namespace wbc {

struct PartNetParams {
  Matrix weights;  // L x C, row l is branch l
  Vector biases;   // L

  std::size_t branch_count() const { return weights.rows(); }
  std::size_t channels() const { return weights.cols(); }

  /// Weights uniform in [-1/sqrt(C), 1/sqrt(C)], biases zero.
  static PartNetParams init(std::size_t branches, std::size_t channels, Rng& rng);
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<PartMask> generate_masks(const Tensor3& f, const PartNetParams& params);

struct PartNetGrads {
  Tensor3 d_features;
  PartNetParams d_params;
};

/// `d_masks[l]` holds dL/dM_l per location. Masks are recomputed from `f`.
PartNetGrads partnet_backward(const Tensor3& f, const PartNetParams& params,
                              std::span<const Vector> d_masks);

}  // namespace wbc
