#pragma once

// Single-shot retrieval evaluation: nearest-first gallery ranking, CMC and
// mean average precision.

#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "wbc/dataio.hpp"
#include "wbc/model.hpp"
#include "wbc/tensor.hpp"

namespace wbc {

/// Gallery indices by ascending Euclidean distance, ties by ascending index.
std::vector<std::size_t> rank_gallery(std::span<const double> probe,
                                      std::span<const Vector> gallery);

struct Ranking {
  std::vector<std::size_t> order;  // gallery indices, nearest first
  int probe_label = 0;
};

/// cmc[r - 1] = fraction of probes whose first true match is within the top r.
/// Throws ProtocolError for a probe with no true match in the gallery.
Vector cmc(std::span<const Ranking> rankings, std::span<const int> gallery_labels);

/// Mean over probes of sum_t (t / r_t) / m for true matches at ranks r_1 < ... < r_m.
double mean_ap(std::span<const Ranking> rankings, std::span<const int> gallery_labels);

struct RankingReport {
  std::vector<Ranking> rankings;
  Vector cmc;
  double mean_ap = 0.0;

  /// CMC at rank r (1-based), saturating at the gallery size.
  double rank(std::size_t r) const;
};

RankingReport evaluate_features(std::span<const Vector> probe_features,
                                std::span<const int> probe_labels,
                                std::span<const Vector> gallery_features,
                                std::span<const int> gallery_labels);

RankingReport evaluate(const ModelParams& model, const std::vector<Sample>& probes,
                       const std::vector<Sample>& gallery);

/// Rows `r,cmc` followed by a trailing `mAP,<value>` record.
void write_report_csv(std::ostream& os, const RankingReport& report);
void write_report_json(std::ostream& os, const RankingReport& report);

}  // namespace wbc
