#pragma once

// Variant comparison and part-count sweep over several training seeds.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "wbc/config.hpp"
#include "wbc/dataio.hpp"
#include "wbc/eval.hpp"

namespace wbc {

struct AblationOptions {
  RunConfig base;
  std::vector<Variant> variants{Variant::kGap, Variant::kGapPart, Variant::kBc, Variant::kWbcPart};
  std::vector<std::size_t> part_sweep{1, 3, 5, 8};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

struct MetricRow {
  std::string kind;  // "variant", "sweep" or "run"
  Variant variant = Variant::kWbcPart;
  std::size_t parts = 0;
  std::uint64_t seed = 0;  // 0 on median rows
  double r1 = 0, r5 = 0, r10 = 0, r20 = 0, mean_ap = 0;
};

struct AblationResult {
  std::vector<MetricRow> variant_rows;  // median over seeds, one per variant
  std::vector<MetricRow> sweep_rows;    // WBC_PART median over seeds, one per L
  std::vector<MetricRow> runs;          // every individual training run
};

/// Probe/gallery come from the dataset when present, otherwise from a
/// held-in re-split of the training samples.
AblationResult run_ablation(const Dataset& data, const AblationOptions& opts);

MetricRow metrics_from(const RankingReport& report);

/// `kind,variant,parts,seed,r1,r5,r10,r20,mAP` rows.
void write_ablation_csv(std::ostream& os, const std::vector<MetricRow>& rows);

double median(std::vector<double> v);

}  // namespace wbc
