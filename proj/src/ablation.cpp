#include "wbc/ablation.hpp"

#include <algorithm>
#include <cstdio>

#include "wbc/trainer.hpp"

namespace wbc {

namespace {

MetricRow train_and_score(const Dataset& data, const std::vector<Sample>& probe,
                          const std::vector<Sample>& gallery, const RunConfig& base,
                          Variant variant, std::size_t parts, std::uint64_t seed) {
  RunConfig cfg = base;
  cfg.model.variant = variant;
  cfg.model.parts = parts;
  cfg.model.seed = seed;
  cfg.sgd.seed = seed;
  const TrainResult trained = train(data.train, cfg.model, cfg.sgd, cfg.loss);
  MetricRow row = metrics_from(evaluate(trained.params, probe, gallery));
  row.kind = "run";
  row.variant = variant;
  row.parts = uses_parts(variant) ? parts : 1;
  row.seed = seed;
  return row;
}

MetricRow median_row(const std::vector<MetricRow>& runs, const std::string& kind) {
  auto pick = [&](double MetricRow::*m) {
    std::vector<double> v;
    for (const MetricRow& r : runs) v.push_back(r.*m);
    return median(v);
  };
  MetricRow out = runs.front();
  out.kind = kind;
  out.seed = 0;
  out.r1 = pick(&MetricRow::r1);
  out.r5 = pick(&MetricRow::r5);
  out.r10 = pick(&MetricRow::r10);
  out.r20 = pick(&MetricRow::r20);
  out.mean_ap = pick(&MetricRow::mean_ap);
  return out;
}

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

MetricRow metrics_from(const RankingReport& report) {
  MetricRow row;
  row.r1 = report.rank(1);
  row.r5 = report.rank(5);
  row.r10 = report.rank(10);
  row.r20 = report.rank(20);
  row.mean_ap = report.mean_ap;
  return row;
}

AblationResult run_ablation(const Dataset& data, const AblationOptions& opts) {
  if (opts.seeds.empty()) throw ConfigError("ablation: need at least one seed");
  std::vector<Sample> probe = data.probe, gallery = data.gallery;
  if (probe.empty() || gallery.empty()) {
    probe.clear();
    gallery.clear();
    resplit_held_in(data.train, probe, gallery);
  }

  AblationResult result;
  const std::size_t default_parts = opts.base.model.parts;
  for (Variant v : opts.variants) {
    std::vector<MetricRow> runs;
    for (std::uint64_t seed : opts.seeds)
      runs.push_back(train_and_score(data, probe, gallery, opts.base, v, default_parts, seed));
    result.variant_rows.push_back(median_row(runs, "variant"));
    result.runs.insert(result.runs.end(), runs.begin(), runs.end());
  }
  for (std::size_t parts : opts.part_sweep) {
    std::vector<MetricRow> runs;
    for (std::uint64_t seed : opts.seeds) {
      // The default-L WBC_PART runs were already trained above.
      auto done = std::find_if(result.runs.begin(), result.runs.end(), [&](const MetricRow& r) {
        return r.variant == Variant::kWbcPart && r.parts == parts && r.seed == seed;
      });
      if (done != result.runs.end()) {
        runs.push_back(*done);
        continue;
      }
      runs.push_back(
          train_and_score(data, probe, gallery, opts.base, Variant::kWbcPart, parts, seed));
      result.runs.push_back(runs.back());
    }
    result.sweep_rows.push_back(median_row(runs, "sweep"));
  }
  return result;
}

void write_ablation_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  os << "kind,variant,parts,seed,r1,r5,r10,r20,mAP\n";
  char buf[256];
  for (const MetricRow& r : rows) {
    const std::string seed = r.seed == 0 ? "median" : std::to_string(r.seed);
    std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%s,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.kind.c_str(),
                  std::string(variant_name(r.variant)).c_str(), r.parts, seed.c_str(), r.r1, r.r5,
                  r.r10, r.r20, r.mean_ap);
    os << buf;
  }
}

}  // namespace wbc
