// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "support/oracles.hpp"
#include "wbc/ablation.hpp"
#include "wbc/aggregation.hpp"
#include "wbc/cli.hpp"
#include "wbc/eval.hpp"
#include "wbc/gradcheck.hpp"
#include "wbc/loss.hpp"
#include "wbc/trainer.hpp"

using namespace wbc;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

Tensor3 random_map(std::mt19937_64& rng, std::size_t max_hw, std::size_t max_c) {
  std::uniform_int_distribution<std::size_t> hw(1, max_hw), ch(1, max_c);
  const std::size_t h = hw(rng), w = hw(rng), c = ch(rng);
  return Tensor3(h, w, c, oracle::random_vec(rng, h * w * c, -2.0, 2.0));
}

PartMask random_mask(std::mt19937_64& rng, const Tensor3& f) {
  return PartMask(f.height(), f.width(), oracle::random_vec(rng, f.locations(), 0.0, 1.0));
}

// 1. Every backward pass against central differences.
Verdict gradient_certification() {
  const auto t0 = Clock::now();
  GradcheckOptions o;  // 20 instances, H = W <= 4, C <= 6, L <= 3, D <= 4
  o.eps = 1e-5;
  o.tolerance = 1e-5;
  const auto rows = run_gradcheck(o);
  const double elapsed = seconds_since(t0);
  Verdict v;
  double worst = 0.0;
  const std::vector<std::string> required{"wbc_backward", "signed_sqrt_backward", "embed_backward",
                                          "partnet_backward", "triplet_hinge_backward"};
  for (const std::string& op : required)
    if (std::none_of(rows.begin(), rows.end(), [&](const GradcheckRow& r) { return r.op == op; }))
      v.pass = false;
  bool model_checked = false;
  for (const auto& r : rows) {
    worst = std::max(worst, r.max_relative_error);
    model_checked = model_checked || r.op.rfind("model_backward", 0) == 0;
    v.pass = v.pass && r.pass && r.instances >= 20 && r.max_relative_error < 1e-5;
  }
  v.pass = v.pass && model_checked && elapsed < 30.0;
  v.detail = std::to_string(rows.size()) + " ops x 20 instances, max relative error " +
             fmt("%.2e", worst) + ", " + fmt("%.1f s", elapsed);
  return v;
}

// 2. Weighted code with a unit mask reduces to the plain code; mask identities.
Verdict reduction_identities() {
  std::mt19937_64 rng(2002);
  std::uniform_real_distribution<double> s_dist(0.05, 1.0);
  Verdict v;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Tensor3 f = random_map(rng, 6, 8);
    const PartMask m = random_mask(rng, f);
    v.pass = v.pass && weighted_bilinear_code(PartMask(f.height(), f.width(), 1.0), f).flat() ==
                           bilinear_code(f).flat();
    Tensor3 absorbed = f;
    for (std::size_t x = 0; x < f.locations(); ++x)
      for (double& e : absorbed.pixel(x)) e *= m.at(x);
    const Vector wbc = weighted_bilinear_code(m, f).flat();
    worst = std::max(worst, relative_error(wbc, bilinear_code(absorbed).flat()));
    const double s = s_dist(rng);
    Vector sm = m.values();
    for (double& e : sm) e *= s;
    Vector scaled = wbc;
    for (double& e : scaled) e *= s * s;
    worst = std::max(worst, relative_error(weighted_bilinear_code(PartMask(f.height(), f.width(), sm), f).flat(),
                                           scaled));
  }
  v.pass = v.pass && worst < 1e-10;
  v.detail = "100 cases bit-exact, identity max relative error " + fmt("%.2e", worst);
  return v;
}

// 3. Symmetry and positive semi-definiteness.
Verdict symmetric_psd() {
  std::mt19937_64 rng(3003);
  Verdict v;
  double worst_asym = 0.0, worst_neg = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Tensor3 f = random_map(rng, 5, 8);
    const std::size_t c = f.channels();
    const Matrix b = weighted_bilinear_code(random_mask(rng, f), f).matrix();
    Vector bt(c * c);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) bt[i * c + j] = b(j, i);
    worst_asym = std::max(worst_asym, relative_error(b.values(), bt));
    const Vector eig = oracle::symmetric_eigenvalues(b.values(), c);
    const double hi = *std::max_element(eig.begin(), eig.end());
    const double lo = *std::min_element(eig.begin(), eig.end());
    if (hi > 0.0) worst_neg = std::max(worst_neg, -lo / hi);
    v.pass = v.pass && lo >= -1e-6 * std::max(hi, 0.0);
  }
  v.pass = v.pass && worst_asym <= 1e-9;
  v.detail = "50 cases, max asymmetry " + fmt("%.2e", worst_asym) + ", worst min/max eigenvalue " +
             fmt("%.2e", -worst_neg);
  return v;
}

// 4. Loss against naive enumeration; closed-form counts; margin on collapse.
Verdict loss_oracle() {
  std::mt19937_64 rng(4004);
  std::uniform_int_distribution<int> n_dist(2, 12), id_dist(0, 3), d_dist(1, 8);
  Verdict v;
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto n = static_cast<std::size_t>(n_dist(rng));
    const auto d = static_cast<std::size_t>(d_dist(rng));
    std::vector<Vector> f;
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) {
      Vector x = oracle::random_vec(rng, d);
      const double s = norm2(x);
      for (double& e : x) e /= s;
      f.push_back(x);
      y.push_back(id_dist(rng));
    }
    std::size_t naive_count = 0;
    const double expect = oracle::naive_batch_loss(f, y, 0.2, &naive_count);
    const BatchLoss bl = batch_loss(f, y, {});
    worst = std::max(worst, std::abs(bl.loss - expect));
    std::size_t closed = 0;
    for (int id = 0; id <= 3; ++id) {
      const auto k = static_cast<std::size_t>(std::count(y.begin(), y.end(), id));
      closed += k * (k == 0 ? 0 : k - 1) * (n - k);
    }
    v.pass = v.pass && bl.triplets == closed && naive_count == closed &&
             triplet_count(y) == closed && mine_triplets(y).size() == closed;
  }
  const std::vector<Vector> same(8, Vector{0.0, 0.6, 0.8});
  const std::vector<int> ys{0, 0, 1, 1, 2, 2, 3, 3};
  const double collapsed = batch_loss(same, ys, {}).loss;
  v.pass = v.pass && worst <= 1e-12 && collapsed == 0.2 && LossConfig{}.margin == 0.2;
  v.detail = "200 batches, max |loss - naive| " + fmt("%.2e", worst) + ", collapsed loss " +
             fmt("%.17g", collapsed);
  return v;
}

// 5. CMC and mAP against exhaustive brute force.
Verdict metric_oracles() {
  Verdict v;
  std::size_t configs = 0;
  for (std::size_t g = 1; g <= 6; ++g) {
    std::size_t combos = 1;
    for (std::size_t i = 0; i < g; ++i) combos *= 3;
    for (std::size_t code = 0; code < combos; ++code) {
      std::vector<int> gl(g);
      std::size_t rest = code;
      for (std::size_t i = 0; i < g; ++i, rest /= 3) gl[i] = static_cast<int>(rest % 3);
      std::vector<Vector> gal;
      for (std::size_t i = 0; i < g; ++i) gal.push_back(Vector{static_cast<double>(i)});
      std::vector<Vector> pro;
      std::vector<int> pl;
      for (int id = 0; id < 3; ++id)
        if (std::count(gl.begin(), gl.end(), id) > 0) {
          pro.push_back(Vector{-1.0});
          pl.push_back(id);
        }
      const RankingReport r = evaluate_features(pro, pl, gal, gl);
      std::vector<std::vector<std::size_t>> orders;
      double ap = 0.0;
      for (std::size_t p = 0; p < pro.size(); ++p) {
        orders.push_back(oracle::brute_rank(pro[p], gal));
        ap += oracle::brute_ap(orders.back(), pl[p], gl);
      }
      v.pass = v.pass && r.cmc == oracle::brute_cmc(orders, pl, gl) &&
               std::abs(r.mean_ap - ap / static_cast<double>(pro.size())) <= 1e-15;
      ++configs;
    }
  }
  const std::vector<Ranking> worked{{{0, 1, 2}, 1}};
  const std::vector<int> worked_labels{1, 2, 1};
  const double ap = mean_ap(worked, worked_labels);
  v.pass = v.pass && ap == 5.0 / 6.0;
  v.detail = std::to_string(configs) + " label configurations, worked example AP " + fmt("%.17g", ap);
  return v;
}

// 6. Optimizer defaults and schedule.
Verdict defaults() {
  const SGDConfig full_scale;
  const LossConfig loss;
  Verdict v;
  v.pass = lr_schedule(0, full_scale) == 0.008 && lr_schedule(4000, full_scale) == 0.004 &&
           loss.margin == 0.2 && full_scale.momentum == 0.9 && full_scale.weight_decay == 0.0005 &&
           full_scale.batch_size == 300;
  v.detail = "lr(0) " + fmt("%g", lr_schedule(0, full_scale)) + ", lr(4000) " +
             fmt("%g", lr_schedule(4000, full_scale)) + ", margin " + fmt("%g", loss.margin) +
             ", momentum " + fmt("%g", full_scale.momentum) + ", weight decay " +
             fmt("%g", full_scale.weight_decay) + ", batch " + fmt("%g", static_cast<double>(full_scale.batch_size));
  return v;
}

RunConfig overfit_config() {
  RunConfig c;  // synth 8 IDs x 6 images, seed 1; desk-scale SGD
  c.model.variant = Variant::kWbcPart;
  c.model.parts = 3;
  c.sgd.max_iters = 500;
  c.sgd.threads = 1;
  return c;
}

// 7. Overfit the tiny synthetic set.
Verdict overfit() {
  const RunConfig c = overfit_config();
  const auto data = synth_generate(c.synth).samples;
  const auto t0 = Clock::now();
  const TrainResult r = train(data, c.model, c.sgd, c.loss);
  std::vector<Sample> probe, gallery;
  resplit_held_in(data, probe, gallery);
  const RankingReport rep = evaluate(r.params, probe, gallery);
  const double elapsed = seconds_since(t0);
  Verdict v;
  const double loss = r.log.back().loss;
  v.pass = r.log.size() == 500 && loss < 0.01 && rep.rank(1) == 1.0 && rep.mean_ap > 0.99 &&
           elapsed < 60.0;
  v.detail = "final batch loss " + fmt("%.4g", loss) + ", rank-1 " + fmt("%.4f", rep.rank(1)) +
             ", mAP " + fmt("%.4f", rep.mean_ap) + ", " + fmt("%.1f s", elapsed);
  return v;
}

// 8. Variant ordering on the part-structured set with jitter.
Verdict ablation_ordering() {
  AblationOptions o;
  o.base.synth.identities = 32;
  o.base.synth.test_identities = 16;
  o.base.synth.jitter = 2;
  o.base.synth.noise = 0.05;
  o.base.synth.seed = 7;
  o.base.model.parts = 3;
  o.base.sgd.threads = 1;
  o.seeds = {1, 2, 3, 4, 5};
  o.part_sweep = {};
  const auto out = synth_generate(o.base.synth);
  Dataset data;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    switch (out.manifest.samples[i].split) {
      case Split::kTrain: data.train.push_back(out.samples[i]); break;
      case Split::kProbe: data.probe.push_back(out.samples[i]); break;
      case Split::kGallery: data.gallery.push_back(out.samples[i]); break;
    }
  }
  const AblationResult r = run_ablation(data, o);
  auto r1 = [&](Variant v) {
    for (const MetricRow& row : r.variant_rows)
      if (row.variant == v) return row.r1;
    return -1.0;
  };
  Verdict v;
  v.pass = r1(Variant::kWbcPart) >= r1(Variant::kGap) && r1(Variant::kWbcPart) >= r1(Variant::kBc);
  v.detail = "median rank-1 over 5 seeds: WBC_PART " + fmt("%.4f", r1(Variant::kWbcPart)) + ", GAP " +
             fmt("%.4f", r1(Variant::kGap)) + ", BC " + fmt("%.4f", r1(Variant::kBc)) +
             ", GAP_PART " + fmt("%.4f", r1(Variant::kGapPart));
  return v;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "wbc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// 9. Two complete train + eval runs are byte-identical.
Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "wbc_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path cfg = root / "run.cfg";
  {
    std::ofstream os(cfg);
    os << dump_run_config(overfit_config());
  }
  Verdict v;
  v.pass = cli({"synth", "--config", cfg.string(), "--out", (root / "data").string()}) == 0;
  for (const char* run : {"a", "b"}) {
    v.pass = v.pass &&
             cli({"train", "--data", (root / "data").string(), "--config", cfg.string(), "--out",
                  (root / run).string()}) == 0 &&
             cli({"eval", "--checkpoint", (root / run).string(), "--data", (root / "data").string(),
                  "--out", (root / run / "report.csv").string()}) == 0 &&
             cli({"eval", "--checkpoint", (root / run).string(), "--data", (root / "data").string(),
                  "--out", (root / run / "report.json").string()}) == 0;
  }
  std::size_t compared = 0;
  if (v.pass)
    for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
      if (!e.is_regular_file()) continue;
      v.pass = v.pass && slurp(e.path()) == slurp(root / "b" / fs::relative(e.path(), root / "a"));
      ++compared;
    }
  v.pass = v.pass && compared > 0;
  v.detail = std::to_string(compared) + " checkpoint/report files compared byte-for-byte";
  fs::remove_all(root);
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"AC1 gradient certification", gradient_certification},
      {"AC2 unit-mask reduction and mask identities", reduction_identities},
      {"AC3 bilinear symmetry and PSD", symmetric_psd},
      {"AC4 loss oracle", loss_oracle},
      {"AC5 metric oracles", metric_oracles},
      {"AC6 schedule and optimizer defaults", defaults},
      {"AC7 overfit reproduction", overfit},
      {"AC8 ablation ordering", ablation_ordering},
      {"AC9 determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
