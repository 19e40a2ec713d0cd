#include "wbc/loss.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <map>
#include <string>

#include "wbc/random.hpp"

namespace wbc {

namespace {

void require_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionError("feature lengths differ: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
}

}  // namespace

double euclid_dist(std::span<const double> a, std::span<const double> b) {
  require_same_length(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double triplet_hinge(std::span<const double> fi, std::span<const double> fj,
                     std::span<const double> fk, const LossConfig& cfg) {
  return std::max(0.0, euclid_dist(fi, fj) - euclid_dist(fi, fk) + cfg.margin);
}

TripletGrads triplet_hinge_backward(std::span<const double> fi, std::span<const double> fj,
                                    std::span<const double> fk, const LossConfig& cfg,
                                    double d_loss) {
  require_same_length(fi, fj);
  require_same_length(fi, fk);
  const std::size_t n = fi.size();
  TripletGrads g{Vector(n, 0.0), Vector(n, 0.0), Vector(n, 0.0)};
  const double d_ij = euclid_dist(fi, fj);
  const double d_ik = euclid_dist(fi, fk);
  if (d_ij - d_ik + cfg.margin <= 0.0) return g;
  const double s_ij = d_loss / (d_ij + kDistanceDelta);
  const double s_ik = d_loss / (d_ik + kDistanceDelta);
  for (std::size_t t = 0; t < n; ++t) {
    g.d_positive[t] = s_ij * (fj[t] - fi[t]);
    g.d_negative[t] = s_ik * (fi[t] - fk[t]);
    g.d_anchor[t] = s_ij * (fi[t] - fj[t]) - s_ik * (fi[t] - fk[t]);
  }
  return g;
}

std::vector<Triplet> mine_triplets(std::span<const int> labels, const LossConfig& cfg) {
  std::vector<Triplet> all;
  const std::size_t n = labels.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || labels[j] != labels[i]) continue;
      for (std::size_t k = 0; k < n; ++k)
        if (labels[k] != labels[i]) all.push_back({i, j, k});
    }
  if (cfg.max_triplets == 0 || all.size() <= cfg.max_triplets) return all;
  // std::sample keeps the relative order of the selected elements.
  std::vector<Triplet> kept;
  kept.reserve(cfg.max_triplets);
  Rng rng(cfg.subsample_seed);
  std::sample(all.begin(), all.end(), std::back_inserter(kept), cfg.max_triplets, rng);
  return kept;
}

std::size_t triplet_count(std::span<const int> labels) {
  std::map<int, std::size_t> per_id;
  for (int y : labels) ++per_id[y];
  std::size_t total = 0;
  for (const auto& [id, cnt] : per_id) total += cnt * (cnt - 1) * (labels.size() - cnt);
  return total;
}

BatchLoss batch_loss(std::span<const Vector> features, std::span<const int> labels,
                     const LossConfig& cfg) {
  if (features.size() != labels.size())
    throw DimensionError("batch_loss: " + std::to_string(features.size()) + " features but " +
                         std::to_string(labels.size()) + " labels");
  BatchLoss out;
  const std::size_t dim = features.empty() ? 0 : features.front().size();
  out.d_features.assign(features.size(), Vector(dim, 0.0));
  for (const Vector& f : features)
    if (f.size() != dim) throw DimensionError("batch_loss: unequal feature lengths");

  const std::vector<Triplet> triplets = mine_triplets(labels, cfg);
  out.triplets = triplets.size();
  if (triplets.empty()) return out;

  // Running mean: identical hinge values average back to exactly that value.
  const double scale = 1.0 / static_cast<double>(triplets.size());
  double mean = 0.0;
  std::size_t seen = 0;
  for (const Triplet& t : triplets) {
    const Vector& fi = features[t.anchor];
    const Vector& fj = features[t.positive];
    const Vector& fk = features[t.negative];
    const double h = triplet_hinge(fi, fj, fk, cfg);
    ++seen;
    mean += (h - mean) / static_cast<double>(seen);
    if (h <= 0.0) continue;
    ++out.active;
    const TripletGrads g = triplet_hinge_backward(fi, fj, fk, cfg, scale);
    for (std::size_t d = 0; d < dim; ++d) {
      out.d_features[t.anchor][d] += g.d_anchor[d];
      out.d_features[t.positive][d] += g.d_positive[d];
      out.d_features[t.negative][d] += g.d_negative[d];
    }
  }
  out.loss = mean;
  return out;
}

}  // namespace wbc
