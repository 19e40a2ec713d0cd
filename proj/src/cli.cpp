#include "wbc/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "wbc/ablation.hpp"
#include "wbc/config.hpp"
#include "wbc/dataio.hpp"
#include "wbc/eval.hpp"
#include "wbc/gradcheck.hpp"
#include "wbc/model.hpp"
#include "wbc/trainer.hpp"

namespace wbc {

namespace fs = std::filesystem;

namespace {

RunConfig load_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
  RunConfig cfg = load_run_config(path);
  for (const std::string& s : sets) apply_override(cfg, s);
  return cfg;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  return os;
}

std::string fixed(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct SynthArgs {
  std::string config, out;
  std::vector<std::string> sets;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const RunConfig cfg = load_with_overrides(a.config, a.sets);
  const DatasetManifest m = synth_write(cfg.synth, a.out);
  const SynthOutput regenerated = synth_generate(cfg.synth);
  out << "wrote " << m.samples.size() << " samples (" << cfg.synth.identities
      << " identities) to " << a.out << "\n";
  out << "raw-pixel leave-one-out rank-1: " << fixed(raw_pixel_rank1(regenerated.samples)) << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data, config, out;
  std::vector<std::string> sets;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const RunConfig cfg = load_with_overrides(a.config, a.sets);
  const Dataset data = load_dataset(a.data);
  if (data.train.empty()) throw ConfigError("dataset has no training samples");
  const TrainResult result = train(data.train, cfg.model, cfg.sgd, cfg.loss);
  save_checkpoint(a.out, result.params);
  {
    std::ofstream log = open_output(fs::path(a.out) / "train_log.csv");
    write_log_csv(log, result.log);
  }
  {
    std::ofstream echo = open_output(fs::path(a.out) / "run.cfg");
    echo << dump_run_config(cfg);
  }
  out << "trained " << variant_name(cfg.model.variant) << " for " << result.log.size()
      << " iterations";
  if (!result.log.empty()) out << ", final batch loss " << result.log.back().loss;
  out << "\ncheckpoint: " << a.out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint, data, out;
  bool held_in = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const ModelParams params = load_checkpoint(a.checkpoint);
  const Dataset data = load_dataset(a.data);
  std::vector<Sample> probe = data.probe, gallery = data.gallery;
  if (a.held_in || probe.empty() || gallery.empty()) {
    probe.clear();
    gallery.clear();
    resplit_held_in(data.train, probe, gallery);
  }
  const RankingReport report = evaluate(params, probe, gallery);
  std::ofstream os = open_output(a.out);
  if (fs::path(a.out).extension() == ".json")
    write_report_json(os, report);
  else
    write_report_csv(os, report);
  out << "probes " << probe.size() << ", gallery " << gallery.size() << ": rank-1 "
      << fixed(report.rank(1)) << ", rank-5 " << fixed(report.rank(5)) << ", mAP "
      << fixed(report.mean_ap) << "\n";
  return kExitOk;
}

int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  const auto rows = run_gradcheck(o);
  print_gradcheck_table(out, rows);
  double worst = 0.0;
  bool ok = true;
  for (const auto& r : rows) {
    worst = std::max(worst, r.max_relative_error);
    if (!r.pass) {
      ok = false;
      out << "FAILED: " << r.op << "\n";
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "max relative error %.3e (tolerance %.1e)\n", worst, o.tolerance);
  out << buf;
  return ok ? kExitOk : kExitFailure;
}

struct AblateArgs {
  std::string data, config, out, runs_out;
  std::vector<std::string> sets;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::size_t> parts{1, 3, 5, 8};
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  AblationOptions opts;
  opts.base = load_with_overrides(a.config, a.sets);
  opts.seeds = a.seeds;
  opts.part_sweep = a.parts;
  const Dataset data = load_dataset(a.data);
  const AblationResult result = run_ablation(data, opts);
  std::vector<MetricRow> rows = result.variant_rows;
  rows.insert(rows.end(), result.sweep_rows.begin(), result.sweep_rows.end());
  {
    std::ofstream os = open_output(a.out);
    write_ablation_csv(os, rows);
  }
  if (!a.runs_out.empty()) {
    std::ofstream os = open_output(a.runs_out);
    write_ablation_csv(os, result.runs);
  }
  write_ablation_csv(out, rows);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weighted bilinear coding over salient parts: synthesis, training, evaluation"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic part-structured identity dataset");
  synth->add_option("--config", synth_args.config, "key = value config file")
      ->required()
      ->check(CLI::ExistingFile);
  synth->add_option("--out", synth_args.out, "Output dataset directory")->required();
  synth->add_option("--set", synth_args.sets, "Override a config key (key=value)");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model with the triplet ranking loss");
  train_cmd->add_option("--data", train_args.data, "Dataset directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  train_cmd->add_option("--config", train_args.config, "key = value config file")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_args.out, "Checkpoint output directory")->required();
  train_cmd->add_option("--set", train_args.sets, "Override a config key (key=value)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Single-shot CMC / mAP evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--data", eval_args.data, "Dataset directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--out", eval_args.out, "Report path (.csv or .json)")->required();
  eval_cmd->add_flag("--held-in", eval_args.held_in,
                     "Re-split the training samples: first image per identity as probe");

  GradcheckOptions gc;
  auto* grad = app.add_subcommand("gradcheck", "Certify backward passes against finite differences");
  grad->add_option("--seed", gc.seed, "Instance sampling seed");
  grad->add_option("--instances", gc.instances, "Random instances per operation");
  grad->add_option("--max-hw", gc.max_hw, "Largest feature-map height/width");
  grad->add_option("--max-c", gc.max_c, "Largest channel count");
  grad->add_option("--max-parts", gc.max_parts, "Largest part count");
  grad->add_option("--max-d", gc.max_d, "Largest embedding dimension");
  grad->add_option("--tolerance", gc.tolerance, "Relative error threshold");
  grad->add_option("--corrupt-op", gc.corrupt_op, "Test hook: corrupt the named backward op")
      ->group("");

  AblateArgs ab;
  auto* ablate = app.add_subcommand("ablate", "Variant comparison and part-count sweep");
  ablate->add_option("--data", ab.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ablate->add_option("--config", ab.config, "key = value config file")
      ->required()
      ->check(CLI::ExistingFile);
  ablate->add_option("--out", ab.out, "Summary CSV path")->required();
  ablate->add_option("--runs-out", ab.runs_out, "Per-seed CSV path");
  ablate->add_option("--seeds", ab.seeds, "Training seeds (non-zero)")->delimiter(',');
  ablate->add_option("--parts", ab.parts, "Part counts for the WBC_PART sweep")->delimiter(',');
  ablate->add_option("--set", ab.sets, "Override a config key (key=value)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_args, out);
    if (*train_cmd) return cmd_train(train_args, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*grad) return cmd_gradcheck(gc, out);
    if (*ablate) return cmd_ablate(ab, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace wbc
