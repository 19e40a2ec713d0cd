#include "wbc/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <string>

#include "json.hpp"

#include "wbc/loss.hpp"

namespace wbc {

namespace {

// 1-based rank of the first true match, 0 when there is none.
std::size_t first_match_rank(const Ranking& r, std::span<const int> gallery_labels) {
  for (std::size_t pos = 0; pos < r.order.size(); ++pos)
    if (gallery_labels[r.order[pos]] == r.probe_label) return pos + 1;
  return 0;
}

void require_rankings(std::span<const Ranking> rankings, std::span<const int> gallery_labels) {
  if (rankings.empty()) throw ProtocolError("evaluation needs at least one probe");
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    if (rankings[i].order.size() != gallery_labels.size())
      throw DimensionError("ranking " + std::to_string(i) + " does not cover the gallery");
    if (first_match_rank(rankings[i], gallery_labels) == 0)
      throw ProtocolError("probe " + std::to_string(i) + " (identity " +
                          std::to_string(rankings[i].probe_label) +
                          ") has no true match in the gallery");
  }
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::size_t> rank_gallery(std::span<const double> probe,
                                      std::span<const Vector> gallery) {
  std::vector<double> dist(gallery.size());
  for (std::size_t g = 0; g < gallery.size(); ++g) dist[g] = euclid_dist(probe, gallery[g]);
  std::vector<std::size_t> order(gallery.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  return order;
}

Vector cmc(std::span<const Ranking> rankings, std::span<const int> gallery_labels) {
  require_rankings(rankings, gallery_labels);
  const std::size_t g = gallery_labels.size();
  std::vector<std::size_t> hits_at(g + 1, 0);
  for (const Ranking& r : rankings) ++hits_at[first_match_rank(r, gallery_labels)];
  Vector curve(g, 0.0);
  std::size_t cumulative = 0;
  for (std::size_t rank = 1; rank <= g; ++rank) {
    cumulative += hits_at[rank];
    curve[rank - 1] = static_cast<double>(cumulative) / static_cast<double>(rankings.size());
  }
  return curve;
}

double mean_ap(std::span<const Ranking> rankings, std::span<const int> gallery_labels) {
  require_rankings(rankings, gallery_labels);
  // Extended-precision accumulation, rounded once, so short hand-checkable
  // cases such as (1 + 2/3) / 2 come out as the correctly rounded 5/6.
  long double total = 0.0L;
  for (const Ranking& r : rankings) {
    long double ap = 0.0L;
    std::size_t found = 0;
    for (std::size_t pos = 0; pos < r.order.size(); ++pos) {
      if (gallery_labels[r.order[pos]] != r.probe_label) continue;
      ++found;
      ap += static_cast<long double>(found) / static_cast<long double>(pos + 1);
    }
    total += ap / static_cast<long double>(found);
  }
  return static_cast<double>(total / static_cast<long double>(rankings.size()));
}

double RankingReport::rank(std::size_t r) const {
  if (cmc.empty() || r == 0) return 0.0;
  return cmc[std::min(r, cmc.size()) - 1];
}

RankingReport evaluate_features(std::span<const Vector> probe_features,
                                std::span<const int> probe_labels,
                                std::span<const Vector> gallery_features,
                                std::span<const int> gallery_labels) {
  if (probe_features.size() != probe_labels.size() ||
      gallery_features.size() != gallery_labels.size())
    throw DimensionError("evaluate: feature and label counts differ");
  RankingReport report;
  for (std::size_t i = 0; i < probe_features.size(); ++i)
    report.rankings.push_back({rank_gallery(probe_features[i], gallery_features), probe_labels[i]});
  report.cmc = cmc(report.rankings, gallery_labels);
  report.mean_ap = mean_ap(report.rankings, gallery_labels);
  return report;
}

RankingReport evaluate(const ModelParams& model, const std::vector<Sample>& probes,
                       const std::vector<Sample>& gallery) {
  auto describe = [&](const std::vector<Sample>& samples, std::vector<Vector>& feats,
                      std::vector<int>& labels) {
    for (const Sample& s : samples) {
      feats.push_back(forward(s.image, model).feature.values);
      labels.push_back(s.label);
    }
  };
  std::vector<Vector> pf, gf;
  std::vector<int> pl, gl;
  describe(probes, pf, pl);
  describe(gallery, gf, gl);
  return evaluate_features(pf, pl, gf, gl);
}

void write_report_csv(std::ostream& os, const RankingReport& report) {
  os << "r,cmc\n";
  for (std::size_t r = 0; r < report.cmc.size(); ++r)
    os << (r + 1) << "," << fmt_double(report.cmc[r]) << "\n";
  os << "mAP," << fmt_double(report.mean_ap) << "\n";
}

void write_report_json(std::ostream& os, const RankingReport& report) {
  nlohmann::json doc;
  doc["cmc"] = report.cmc;
  doc["mAP"] = report.mean_ap;
  nlohmann::json rankings = nlohmann::json::array();
  for (const Ranking& r : report.rankings)
    rankings.push_back({{"probe_label", r.probe_label}, {"order", r.order}});
  doc["rankings"] = std::move(rankings);
  os << doc.dump(2) << "\n";
}

}  // namespace wbc
