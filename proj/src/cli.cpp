#include "negmine/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "negmine/checkpoint.hpp"
#include "negmine/config.hpp"
#include "negmine/dataset.hpp"
#include "negmine/hashing.hpp"
#include "negmine/pipeline.hpp"
#include "negmine/reports.hpp"

#ifndef NEGMINE_VERSION
#define NEGMINE_VERSION "0.0.0"
#endif

namespace negmine {
namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  int threads = 1;
};

struct Options {
  std::string data;
  std::string checkpoint;
  std::string mining_manifest;
  int phase = 1;
  int fold = 0;
  std::optional<double> threshold;
  bool oracle = false;
};

RunConfig load_run_config(const Common& common) {
  if (common.config.empty()) throw UsageError("--config is required");
  RunConfig cfg = load_config(common.config);
  if (common.seed) {
    cfg.synth.seed = *common.seed;
    cfg.training.seed = *common.seed;
  }
  cfg.training.threads = common.threads;
  cfg.training.validate();
  return cfg;
}

// Collects outputs of one invocation and their hashes.
class RunWriter {
 public:
  RunWriter(const Common& common, std::string command, const RunConfig& cfg)
      : dir_(prepare(common)) {
    manifest_.command = std::move(command);
    manifest_.config = format_config(cfg);
    manifest_.version = version();
    text("config.txt", manifest_.config);
  }

  const fs::path& dir() const { return dir_; }

  void text(const std::string& rel, const std::string& content) {
    const fs::path path = dir_ / rel;
    fs::create_directories(path.parent_path());
    write_text_file(path, content);
    record(rel);
  }

  std::string checkpoint(const std::string& rel, const ParameterSet& params,
                         const AdamState* optimizer = nullptr) {
    const fs::path path = dir_ / rel;
    fs::create_directories(path.parent_path());
    save_checkpoint(path, params, optimizer);
    return record(rel);
  }

  std::string record(const std::string& rel) {
    return manifest_.outputs[rel] = sha256_file(dir_ / rel);
  }

  void input(const std::string& name, const fs::path& path) {
    manifest_.inputs[name] = sha256_file(path);
  }

  void flag(std::string message) { manifest_.flags.push_back(std::move(message)); }

  void finish() {
    manifest_.timestamp = utc_timestamp();
    write_text_file(dir_ / "run_manifest.json", run_manifest_json(manifest_));
  }

 private:
  static fs::path prepare(const Common& common) {
    if (common.out.empty()) throw UsageError("--out is required");
    const fs::path dir = common.out;
    if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir))) {
      if (!common.force) {
        throw UsageError(fmt::format("'{}' already exists; pass --force to overwrite", dir.string()));
      }
      fs::remove_all(dir);
    }
    fs::create_directories(dir);
    return dir;
  }

  fs::path dir_;
  RunManifest manifest_;
};

fs::path require_data(const Options& opt) {
  if (opt.data.empty()) throw UsageError("--data is required");
  return opt.data;
}

// CLI folds are 1-based; 0 selects all labeled images.
int fold_index(const Options& opt) { return opt.fold - 1; }

ParameterSet load_params(const Options& opt, const RunConfig& cfg, Checkpoint* full = nullptr) {
  if (opt.checkpoint.empty()) throw UsageError("--checkpoint is required");
  Checkpoint ck = load_checkpoint(opt.checkpoint);
  require_layers_match(ck.params, cfg.training.network);
  ParameterSet params = ck.params;
  if (full != nullptr) *full = std::move(ck);
  return params;
}

int cmd_generate(const Common& common) {
  const RunConfig cfg = load_run_config(common);
  const SynthDataset ds = generate_dataset(cfg.synth);
  if (common.out.empty()) throw UsageError("--out is required");
  const fs::path dir = common.out;
  if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir))) {
    if (!common.force) {
      throw UsageError(fmt::format("'{}' already exists; pass --force to overwrite", dir.string()));
    }
    fs::remove_all(dir);
  }
  const DatasetManifest m = write_dataset(ds, cfg, dir);

  RunManifest run;
  run.command = "generate";
  run.config = format_config(cfg);
  run.version = version();
  for (const auto& e : m.entries) {
    run.outputs[e.image] = e.image_sha256;
    if (!e.mask.empty()) run.outputs[e.mask] = e.mask_sha256;
    if (!e.audit.empty()) run.outputs[e.audit] = e.audit_sha256;
  }
  run.outputs["config.txt"] = m.config_sha256;
  run.outputs["manifest.json"] = sha256_file(dir / "manifest.json");
  run.timestamp = utc_timestamp();
  write_text_file(dir / "run_manifest.json", run_manifest_json(run));
  fmt::print("generated {} labeled, {} unlabeled, {} true-negative images in {}\n",
             ds.labeled.size(), ds.unlabeled.size(), ds.true_negatives.size(), dir.string());
  return 0;
}

int cmd_train(const Common& common, const Options& opt) {
  const RunConfig cfg = load_run_config(common);
  if (opt.phase != 1 && opt.phase != 2) throw UsageError("--phase must be 1 or 2");
  if (opt.phase == 2 && (opt.checkpoint.empty() || opt.mining_manifest.empty())) {
    throw UsageError("phase 2 requires --checkpoint and --mining-manifest");
  }
  const fs::path data = require_data(opt);
  const LoadedDataset ds = load_dataset(data);
  const FoldSplit split = split_fold(prepare_labeled(ds.labeled), cfg.training, fold_index(opt));
  const std::uint64_t stream = fold_stream(fold_index(opt), cfg.training);

  RunWriter out(common, fmt::format("train --phase {} --fold {}", opt.phase, opt.fold), cfg);
  out.input("data/manifest.json", data / "manifest.json");
  TrainResult result;
  if (opt.phase == 1) {
    result = train_phase1(split.train, cfg.training, stream + 1);
  } else {
    const ParameterSet init = load_params(opt, cfg);
    out.input("checkpoint", opt.checkpoint);
    out.input("mining_manifest", opt.mining_manifest);
    const MiningOutcome mined = parse_mining_manifest(read_text_file(opt.mining_manifest));
    const TrainingSet set = build_phase2_dataset(split.train, mined,
                                                 prepare_pool(ds.unlabeled), cfg.training.mix_ratio);
    result = train_phase2(transfer_weights(init), set, cfg.training, stream + 2);
    if (result.log.extra_missing) out.flag("no pseudo-negatives mined; phase 2 used labeled data only");
  }
  const std::string hash = out.checkpoint("checkpoint.nmck", result.params, &result.optimizer);
  out.text("training_log.csv", training_log_csv(result.log));
  out.finish();
  for (const auto& e : result.log.epochs) fmt::print("epoch {} loss {:.6f}\n", e.epoch, e.loss);
  fmt::print("checkpoint {} sha256 {}\n", (out.dir() / "checkpoint.nmck").string(), hash);
  return 0;
}

int cmd_mine(const Common& common, const Options& opt) {
  const RunConfig cfg = load_run_config(common);
  const std::optional<double> threshold =
      opt.threshold ? opt.threshold : cfg.training.mining_threshold;
  if (!threshold) throw UsageError("--threshold is required when the config has no mining_threshold");
  const fs::path data = require_data(opt);
  const ParameterSet params = load_params(opt, cfg);
  const LoadedDataset ds = load_dataset(data);

  RunWriter out(common, "mine", cfg);
  out.input("data/manifest.json", data / "manifest.json");
  out.input("checkpoint", opt.checkpoint);
  MiningOutcome outcome = mine_pseudo_negatives(params, prepare_pool(ds.unlabeled), *threshold);
  outcome.checkpoint_hash = sha256_file(opt.checkpoint);
  out.text("mining_manifest.json", mining_manifest_json(outcome));
  out.finish();
  fmt::print("mined {} pseudo-negatives, discarded {}, pool {}\n",
             outcome.pseudo_negative_ids.size(), outcome.discarded_ids.size(),
             ds.unlabeled.size());
  return 0;
}

int cmd_evaluate(const Common& common, const Options& opt) {
  const RunConfig cfg = load_run_config(common);
  const fs::path data = require_data(opt);
  const LoadedDataset ds = load_dataset(data);
  const int fold = fold_index(opt);
  FoldSplit split = split_fold(prepare_labeled(ds.labeled), cfg.training, fold);
  const auto& test = fold < 0 ? split.train : split.test;

  RunWriter out(common, fmt::format("evaluate --fold {}", opt.fold), cfg);
  out.input("data/manifest.json", data / "manifest.json");
  EvalSet set;
  if (opt.oracle) {
    for (const auto& s : test) {
      set.predictions[s.id] = probability_map(s.target);
      set.truths[s.id] = s.target;
    }
  } else {
    set = predict_eval_set(load_params(opt, cfg), test);
    out.input("checkpoint", opt.checkpoint);
  }
  const auto curve = froc_curve(set, cfg.training.thresholds);
  const OperatingPoint op = select_operating_point(curve, cfg.training.min_sensitivity);
  std::vector<FrocRow> rows;
  for (const auto& r : curve) rows.push_back({opt.fold, opt.oracle ? "oracle" : "eval", r});
  out.text("froc.csv", froc_csv(rows));
  if (!op.qualified) out.flag("no threshold reaches min_sensitivity; max-sensitivity point reported");
  out.finish();
  fmt::print("operating point: threshold {:.2f} sensitivity {:.4f} fp/image {:.4f}{}\n",
             op.report.threshold, op.report.sensitivity, op.report.fp_per_image,
             op.qualified ? "" : " (below min_sensitivity)");
  return 0;
}

void write_fold_outputs(RunWriter& out, FoldReport& rep, std::vector<FrocRow>& froc) {
  const std::string tag = fmt::format("fold{}", rep.fold);
  rep.mining.checkpoint_hash = out.checkpoint(fmt::format("checkpoints/{}_phase1.nmck", tag),
                                              rep.phase1_params);
  out.checkpoint(fmt::format("checkpoints/{}_phase2.nmck", tag), rep.phase2.params);
  out.text(fmt::format("mining/{}.json", tag), mining_manifest_json(rep.mining));
  out.text(fmt::format("logs/{}_phase1.csv", tag), training_log_csv(rep.phase1_log));
  out.text(fmt::format("logs/{}_phase2.csv", tag), training_log_csv(rep.phase2.log));
  for (const auto& r : rep.phase1.curve) froc.push_back({rep.fold, "phase1", r});
  for (const auto& r : rep.phase2.evaluation.curve) froc.push_back({rep.fold, "phase2", r});
  for (const auto& o : rep.others) {
    const std::string name = source_name(o.source);
    out.checkpoint(fmt::format("checkpoints/{}_{}.nmck", tag, name), o.params);
    out.text(fmt::format("logs/{}_{}.csv", tag, name), training_log_csv(o.log));
    for (const auto& r : o.evaluation.curve) froc.push_back({rep.fold, name, r});
  }
  if (rep.phase2.log.extra_missing) {
    out.flag(fmt::format("fold {}: no pseudo-negatives mined; phase 2 used labeled data only",
                         rep.fold));
  }
}

int cmd_experiment(const Common& common, const Options& opt, bool compare) {
  const RunConfig cfg = load_run_config(common);
  const fs::path data = require_data(opt);
  const LoadedDataset ds = load_dataset(data);
  ExperimentData input;
  input.labeled = prepare_labeled(ds.labeled);
  input.unlabeled = prepare_pool(ds.unlabeled);
  if (compare) input.approved = prepare_pool(ds.true_negatives);

  RunWriter out(common, compare ? "compare" : "crossval", cfg);
  out.input("data/manifest.json", data / "manifest.json");
  ExperimentResult result = run_experiment(input, cfg.training, compare);
  std::vector<FrocRow> froc;
  for (auto& rep : result.crossval.folds) write_fold_outputs(out, rep, froc);
  out.text("froc.csv", froc_csv(froc));
  out.text("table1.csv", crossval_csv(result.crossval));
  if (result.comparison) {
    out.text("table2.csv", comparison_csv(*result.comparison));
    for (const auto& row : result.comparison->rows) {
      if (!row.present) out.flag(fmt::format("source '{}' unavailable; row omitted", source_name(row.source)));
    }
  }
  out.finish();

  const auto& cv = result.crossval;
  fmt::print("phase 1 avg: sensitivity {:.4f} fp/image {:.4f}\n", cv.phase1_sensitivity,
             cv.phase1_fp_per_image);
  fmt::print("phase 2 avg: sensitivity {:.4f} fp/image {:.4f}\n", cv.phase2_sensitivity,
             cv.phase2_fp_per_image);
  if (result.comparison) {
    for (const auto& row : result.comparison->rows) {
      if (!row.present) continue;
      fmt::print("{:>15}: sensitivity {:.4f} fp/scan {:.4f}\n", source_name(row.source),
                 row.sensitivity, row.fp_per_image);
    }
  }
  return 0;
}

}  // namespace

const char* version() { return NEGMINE_VERSION; }

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Two-phase nodule detection with pseudo-negative mining"};
  app.name(args.empty() ? "negmine" : args.front());
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version()));

  Common common;
  Options opt;
  std::uint64_t seed = 0;
  app.add_option("--config", common.config, "Run config file (key = value)");
  app.add_option("--out", common.out, "Output directory");
  auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
  app.add_flag("--force", common.force, "Replace an existing output directory");
  app.add_option("--threads", common.threads, "Worker threads for fold-parallel commands")
      ->check(CLI::PositiveNumber);

  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", opt.data, "Dataset directory")->required();
  };
  auto* train = app.add_subcommand("train", "Train phase 1 or phase 2");
  add_data(train);
  train->add_option("--phase", opt.phase, "1 or 2")->check(CLI::IsMember({1, 2}));
  train->add_option("--checkpoint", opt.checkpoint, "Phase-1 checkpoint (phase 2)");
  train->add_option("--mining-manifest", opt.mining_manifest, "Mining manifest (phase 2)");
  train->add_option("--fold", opt.fold, "Hold out this fold (1-based); 0 uses all labeled data");

  auto* mine = app.add_subcommand("mine", "Mine pseudo-negatives from the unlabeled pool");
  add_data(mine);
  mine->add_option("--checkpoint", opt.checkpoint, "Phase-1 checkpoint")->required();
  mine->add_option("--threshold", opt.threshold, "Detection threshold in (0, 1)");

  auto* evaluate = app.add_subcommand("evaluate", "FROC curve of a checkpoint");
  add_data(evaluate);
  evaluate->add_option("--checkpoint", opt.checkpoint, "Checkpoint to evaluate");
  evaluate->add_flag("--oracle", opt.oracle, "Use the ground-truth masks as predictions");
  evaluate->add_option("--fold", opt.fold, "Evaluate on this held-out fold; 0 uses all");

  auto* crossval = app.add_subcommand("crossval", "k-fold phase-1/phase-2 experiment");
  add_data(crossval);
  auto* compare = app.add_subcommand("compare", "Phase-2 comparison of negative sources");
  add_data(compare);

  for (auto* sub : {generate, train, mine, evaluate, crossval, compare}) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();  // program name
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  if (seed_opt->count() > 0) common.seed = seed;

  try {
    if (*generate) return cmd_generate(common);
    if (*train) return cmd_train(common, opt);
    if (*mine) return cmd_mine(common, opt);
    if (*evaluate) {
      if (!opt.oracle && opt.checkpoint.empty()) throw UsageError("--checkpoint or --oracle is required");
      return cmd_evaluate(common, opt);
    }
    if (*crossval) return cmd_experiment(common, opt, false);
    if (*compare) return cmd_experiment(common, opt, true);
  } catch (const UsageError& e) {
    fmt::print(stderr, "negmine: usage error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "negmine: error: {}\n", e.what());
    return 1;
  }
  return 2;
}

}  // namespace negmine
