#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"
#include "wbc/partnet.hpp"

using namespace wbc;

namespace {

PartNetParams zero_params(std::size_t branches, std::size_t channels, double bias) {
  PartNetParams p;
  p.weights = Matrix(branches, channels);
  p.biases = Vector(branches, bias);
  return p;
}

}  // namespace

TEST(GenerateMasks, ZeroWeightsGiveHalf) {
  std::mt19937_64 rng(1);
  const Tensor3 f(3, 2, 4, oracle::random_vec(rng, 24));
  const auto masks = generate_masks(f, zero_params(2, 4, 0.0));
  ASSERT_EQ(masks.size(), 2u);
  for (const PartMask& m : masks)
    for (double v : m.values()) EXPECT_EQ(v, 0.5);
}

TEST(GenerateMasks, LargeBiasSaturates) {
  std::mt19937_64 rng(2);
  const Tensor3 f(2, 2, 3, oracle::random_vec(rng, 12));
  const auto masks = generate_masks(f, zero_params(1, 3, 50.0));
  for (double v : masks[0].values()) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(GenerateMasks, ZeroFeatureLocation) {
  PartNetParams p = zero_params(1, 1, 0.0);
  p.weights(0, 0) = 1.0;
  const Tensor3 f(1, 2, 1, std::vector<double>{0.0, 2.0});
  const auto masks = generate_masks(f, p);
  EXPECT_EQ(masks[0](0, 0), 0.5);
  EXPECT_DOUBLE_EQ(masks[0](0, 1), 1.0 / (1.0 + std::exp(-2.0)));
}

TEST(GenerateMasks, ChannelMismatchThrows) {
  EXPECT_THROW(generate_masks(Tensor3(2, 2, 3), zero_params(1, 4, 0.0)), DimensionError);
}

TEST(PartNetInit, RangeAndZeroBias) {
  Rng rng(3);
  const PartNetParams p = PartNetParams::init(3, 16, rng);
  EXPECT_EQ(p.branch_count(), 3u);
  EXPECT_EQ(p.channels(), 16u);
  for (double w : p.weights.values()) EXPECT_LE(std::abs(w), 0.25);
  EXPECT_EQ(p.biases, Vector(3, 0.0));
}

TEST(PartNetBackward, ZeroUpstream) {
  std::mt19937_64 rng(4);
  const Tensor3 f(2, 2, 3, oracle::random_vec(rng, 12));
  PartNetParams p = zero_params(2, 3, 0.1);
  p.weights.values() = oracle::random_vec(rng, 6);
  const std::vector<Vector> d(2, Vector(4, 0.0));
  const PartNetGrads g = partnet_backward(f, p, d);
  for (double v : g.d_features.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.d_params.weights.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.d_params.biases) EXPECT_EQ(v, 0.0);
}

TEST(PartNetBackward, SigmoidSlopeAtZero) {
  const Tensor3 f(1, 1, 2, std::vector<double>{0.7, -0.3});
  const std::vector<Vector> d{{1.0}};
  const PartNetGrads g = partnet_backward(f, zero_params(1, 2, 0.0), d);
  EXPECT_EQ(g.d_params.biases[0], 0.25);
}

TEST(PartNetBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const std::size_t h = 3, w = 3, c = 4, l = 2;
  const Tensor3 f(h, w, c, oracle::random_vec(rng, h * w * c));
  PartNetParams p;
  p.weights = Matrix(l, c, oracle::random_vec(rng, l * c));
  p.biases = oracle::random_vec(rng, l);
  std::vector<Vector> up;
  for (std::size_t i = 0; i < l; ++i) up.push_back(oracle::random_vec(rng, h * w));
  const PartNetGrads g = partnet_backward(f, p, up);

  auto loss_of = [&](const Tensor3& ff, const PartNetParams& pp) {
    const auto masks = generate_masks(ff, pp);
    double s = 0.0;
    for (std::size_t i = 0; i < l; ++i) s += dot(masks[i].values(), up[i]);
    return s;
  };
  auto by_f = [&](std::span<const double> x) {
    return loss_of(Tensor3(h, w, c, Vector(x.begin(), x.end())), p);
  };
  EXPECT_LT(relative_error(g.d_features.values(), finite_diff_grad(by_f, f.values(), 1e-5)), 1e-6);
  auto by_w = [&](std::span<const double> x) {
    PartNetParams q = p;
    q.weights.values().assign(x.begin(), x.end());
    return loss_of(f, q);
  };
  EXPECT_LT(relative_error(g.d_params.weights.values(), finite_diff_grad(by_w, p.weights.values(), 1e-5)),
            1e-6);
  auto by_b = [&](std::span<const double> x) {
    PartNetParams q = p;
    q.biases.assign(x.begin(), x.end());
    return loss_of(f, q);
  };
  EXPECT_LT(relative_error(g.d_params.biases, finite_diff_grad(by_b, p.biases, 1e-5)), 1e-6);
}

TEST(PartNetBackward, WrongGradientCountThrows) {
  const std::vector<Vector> d{{1.0}};
  EXPECT_THROW(partnet_backward(Tensor3(1, 1, 2), zero_params(2, 2, 0.0), d), DimensionError);
}
