#pragma once

// Triplet ranking objective over L2-normalized features.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "wbc/tensor.hpp"

namespace wbc {

struct Triplet {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct LossConfig {
  double margin = 0.2;
  /// Upper bound on mined triplets per batch; 0 disables the cap.
  std::size_t max_triplets = 0;
  /// Seed of the deterministic subsample used when the cap applies.
  std::uint64_t subsample_seed = 0x5eed;
};

inline constexpr double kDistanceDelta = 1e-12;

double euclid_dist(std::span<const double> a, std::span<const double> b);

/// max(0, d(i,j) - d(i,k) + margin)
double triplet_hinge(std::span<const double> fi, std::span<const double> fj,
                     std::span<const double> fk, const LossConfig& cfg);

struct TripletGrads {
  Vector d_anchor;
  Vector d_positive;
  Vector d_negative;
};

/// Subgradient of the hinge; all-zero when the hinge argument is <= 0.
TripletGrads triplet_hinge_backward(std::span<const double> fi, std::span<const double> fj,
                                    std::span<const double> fk, const LossConfig& cfg,
                                    double d_loss);

/// Every (i, j, k) with y_i == y_j, i != j, y_i != y_k, in ascending
/// lexicographic order; deterministically subsampled when over the cap.
std::vector<Triplet> mine_triplets(std::span<const int> labels, const LossConfig& cfg = {});

/// Closed-form count sum_id n_id (n_id - 1) (N - n_id).
std::size_t triplet_count(std::span<const int> labels);

struct BatchLoss {
  double loss = 0.0;
  std::vector<Vector> d_features;
  std::size_t triplets = 0;
  std::size_t active = 0;

  double active_fraction() const {
    return triplets == 0 ? 0.0 : static_cast<double>(active) / static_cast<double>(triplets);
  }
};

/// Mean hinge over mined triplets, with gradients w.r.t. each feature.
BatchLoss batch_loss(std::span<const Vector> features, std::span<const int> labels,
                     const LossConfig& cfg);

}  // namespace wbc
