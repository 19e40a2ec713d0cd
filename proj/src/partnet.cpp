#include "wbc/partnet.hpp"

#include <cmath>
#include <string>

namespace wbc {

namespace {

void require_channels(const Tensor3& f, const PartNetParams& params) {
  if (params.biases.size() != params.branch_count())
    throw DimensionError("part net: bias count != branch count");
  if (f.channels() != params.channels())
    throw DimensionError("part net: feature channels " + std::to_string(f.channels()) +
                         " != branch weight length " + std::to_string(params.channels()));
}

}  // namespace

PartNetParams PartNetParams::init(std::size_t branches, std::size_t channels, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(channels));
  Matrix w(branches, channels);
  for (double& v : w.values()) v = uniform(rng, -a, a);
  return {std::move(w), Vector(branches, 0.0)};
}

std::vector<PartMask> generate_masks(const Tensor3& f, const PartNetParams& params) {
  require_channels(f, params);
  std::vector<PartMask> masks;
  masks.reserve(params.branch_count());
  for (std::size_t l = 0; l < params.branch_count(); ++l) {
    auto w = params.weights.row(l);
    std::vector<double> vals(f.locations());
    for (std::size_t loc = 0; loc < f.locations(); ++loc)
      vals[loc] = sigmoid(dot(w, f.pixel(loc)) + params.biases[l]);
    masks.emplace_back(f.height(), f.width(), std::move(vals));
  }
  return masks;
}

PartNetGrads partnet_backward(const Tensor3& f, const PartNetParams& params,
                              std::span<const Vector> d_masks) {
  require_channels(f, params);
  const std::size_t branches = params.branch_count();
  if (d_masks.size() != branches)
    throw DimensionError("partnet_backward: expected " + std::to_string(branches) +
                         " mask gradients");
  const std::size_t c = f.channels();
  PartNetGrads g{Tensor3(f.height(), f.width(), c),
                 {Matrix(branches, c), Vector(branches, 0.0)}};
  for (std::size_t l = 0; l < branches; ++l) {
    if (d_masks[l].size() != f.locations())
      throw DimensionError("partnet_backward: mask gradient size mismatch");
    auto w = params.weights.row(l);
    auto dw = g.d_params.weights.row(l);
    for (std::size_t loc = 0; loc < f.locations(); ++loc) {
      auto px = f.pixel(loc);
      const double s = sigmoid(dot(w, px) + params.biases[l]);
      const double d_pre = d_masks[l][loc] * s * (1.0 - s);
      auto dpx = g.d_features.pixel(loc);
      for (std::size_t k = 0; k < c; ++k) {
        dw[k] += d_pre * px[k];
        dpx[k] += d_pre * w[k];
      }
      g.d_params.biases[l] += d_pre;
    }
  }
  return g;
}

}  // namespace wbc
