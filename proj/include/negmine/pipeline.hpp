#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "negmine/adam.hpp"
#include "negmine/detect.hpp"
#include "negmine/mining.hpp"
#include "negmine/network.hpp"
#include "negmine/synth.hpp"

namespace negmine {

struct TrainingConfig {
  NetworkSpec network;
  int epochs = 3;
  int phase2_epochs = -1;  // -1: half of `epochs`, rounded up
  int batch_size = 16;
  std::uint64_t seed = 0;
  AdamHyper adam;
  std::optional<double> mining_threshold;  // unset: phase-1 operating threshold
  double mix_ratio = 0.5;
  double min_sensitivity = 0.89;
  int folds = 5;
  int compare_folds = -1;  // folds used by the source comparison; -1: all
  std::vector<double> thresholds = default_thresholds();
  int threads = 1;

  int effective_phase2_epochs() const {
    return phase2_epochs >= 0 ? phase2_epochs : (epochs + 1) / 2;
  }
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;        // mean class-balanced loss over the epoch's batches
  double extra_loss = 0.0;  // mean plain BCE on extra (negative) samples; NaN if none
};

struct TrainingLog {
  std::vector<EpochLog> epochs;
  bool extra_missing = false;
};

struct TrainResult {
  ParameterSet params;
  AdamState optimizer;
  TrainingLog log;
};

/// Preprocesses labeled images into training samples.
std::vector<TrainingSample> prepare_labeled(const std::vector<LabeledImage>& items);
std::vector<PreparedImage> prepare_pool(const std::vector<PoolImage>& items);

/// Runs `epochs` passes of forward, class-balanced loss and Adam on `set`
/// starting from `init`. `stream` separates batching streams of different
/// runs under one seed. A fresh optimizer state is used unless `resume` is
/// given.
TrainResult train(const ParameterSet& init, const TrainingSet& set, int epochs,
                  const TrainingConfig& config, std::uint64_t stream,
                  const AdamState* resume = nullptr);

/// Initializes the network from the config seed and trains on `train_split`.
TrainResult train_phase1(const std::vector<TrainingSample>& train_split,
                         const TrainingConfig& config, std::uint64_t stream = 0);

/// Deep copy of every layer.
ParameterSet transfer_weights(const ParameterSet& source);

TrainResult train_phase2(const ParameterSet& transferred, const TrainingSet& set,
                         const TrainingConfig& config, std::uint64_t stream = 0);

struct PhaseEvaluation {
  std::vector<FrocReport> curve;
  OperatingPoint operating_point;
};

EvalSet predict_eval_set(const ParameterSet& params, const std::vector<TrainingSample>& test);
PhaseEvaluation evaluate(const ParameterSet& params, const std::vector<TrainingSample>& test,
                         const TrainingConfig& config);

/// Held-out index sets of a k-fold partition. Items are ranked by a hash of
/// (seed, id), so assignment does not depend on input order; sizes differ by
/// at most one. Throws std::invalid_argument when k < 2 or k > ids.size().
std::vector<std::vector<std::size_t>> assign_folds(const std::vector<std::string>& ids, int k,
                                                   std::uint64_t seed);

struct FoldSplit {
  std::vector<TrainingSample> train;
  std::vector<TrainingSample> test;
};

/// Train/test split of fold `fold` (0-based) of config.folds, as used by
/// run_experiment. Samples are ordered by id first. fold == -1 puts every
/// sample in `train`.
FoldSplit split_fold(const std::vector<TrainingSample>& labeled, const TrainingConfig& config,
                     int fold);

/// Batching/initialization stream of fold `fold` (0-based; -1 for a run on
/// all labeled data). Phase 1 uses stream + 1 and phase 2 stream + 2.
std::uint64_t fold_stream(int fold, const TrainingConfig& config);

enum class NegativeSource { approved, pseudo_negative, unlabeled };

const char* source_name(NegativeSource s);

struct SourceRun {
  NegativeSource source;
  TrainingLog log;
  PhaseEvaluation evaluation;
  ParameterSet params;
};

struct FoldReport {
  int fold = 0;  // 1-based
  std::vector<std::string> test_ids;
  TrainingLog phase1_log;
  ParameterSet phase1_params;
  PhaseEvaluation phase1;
  MiningOutcome mining;
  SourceRun phase2;                 // pseudo-negative run
  std::vector<SourceRun> others;    // approved / unlabeled runs when compared
  double delta_sensitivity = 0.0;   // phase2 - phase1
  double delta_fp_per_image = 0.0;
};

struct CrossValidationResult {
  std::vector<FoldReport> folds;
  double phase1_sensitivity = 0.0;
  double phase1_fp_per_image = 0.0;
  double phase2_sensitivity = 0.0;
  double phase2_fp_per_image = 0.0;
  double delta_sensitivity = 0.0;
  double delta_fp_per_image = 0.0;
};

struct ComparisonRow {
  NegativeSource source;
  bool present = false;  // false: source pool unavailable, row omitted
  double sensitivity = 0.0;
  double fp_per_image = 0.0;
  int folds = 0;
};

struct ComparisonResult {
  std::vector<ComparisonRow> rows;  // approved, pseudo_negative, unlabeled
};

struct ExperimentData {
  std::vector<TrainingSample> labeled;
  std::optional<std::vector<PreparedImage>> unlabeled;
  std::optional<std::vector<PreparedImage>> approved;
};

struct ExperimentResult {
  CrossValidationResult crossval;
  std::optional<ComparisonResult> comparison;
};

/// Per fold: phase 1 on the training folds, operating point on the held-out
/// fold, mining of the unlabeled pool, phase 2 from transferred weights, and
/// (with `compare`) the approved and unrefined-pool phase-2 runs from the same
/// phase-1 weights on the first compare_folds folds.
ExperimentResult run_experiment(const ExperimentData& data, const TrainingConfig& config,
                                bool compare);

CrossValidationResult run_cross_validation(const std::vector<TrainingSample>& labeled,
                                           const std::vector<PreparedImage>& unlabeled,
                                           const TrainingConfig& config);

ComparisonResult compare_negative_sources(const ExperimentData& data,
                                          const TrainingConfig& config);

}  // namespace negmine
