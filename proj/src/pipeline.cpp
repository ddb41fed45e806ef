#include "negmine/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include <fmt/core.h>

#include "negmine/checkpoint.hpp"
#include "negmine/hashing.hpp"
#include "negmine/image.hpp"
#include "negmine/loss.hpp"
#include "negmine/random.hpp"

namespace negmine {
namespace {

constexpr std::uint64_t kFoldStreamStride = 8;

std::uint64_t init_seed(std::uint64_t seed, std::uint64_t stream) {
  return seed ^ (stream * 0x9E3779B97F4A7C15ULL);
}

// Plain BCE averaged over the pixels of one image of a batch.
double image_bce(const Tensor& probs, int n, const NoduleMask& target) {
  const double* p = probs.plane(n, 0);
  double acc = 0.0;
  for (std::size_t i = 0; i < target.bits.size(); ++i) {
    const double q = std::clamp(p[i], kProbabilityClip, 1.0 - kProbabilityClip);
    acc -= target.bits[i] ? std::log(q) : std::log1p(-q);
  }
  return acc / static_cast<double>(target.bits.size());
}

template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void TrainingConfig::validate() const {
  auto fail = [](const char* field, const std::string& why) {
    throw std::invalid_argument(fmt::format("training config field '{}': {}", field, why));
  };
  network.validate();
  if (epochs < 0) fail("epochs", "must be >= 0");
  if (phase2_epochs < -1) fail("phase2_epochs", "must be >= 0");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(mix_ratio > 0.0 && mix_ratio <= 1.0)) fail("mix_ratio", "must lie in (0, 1]");
  if (!(min_sensitivity >= 0.0 && min_sensitivity <= 1.0)) {
    fail("min_sensitivity", "must lie in [0, 1]");
  }
  if (mining_threshold && !(*mining_threshold > 0.0 && *mining_threshold < 1.0)) {
    fail("mining_threshold", "must lie in (0, 1)");
  }
  if (folds < 2) fail("folds", "must be >= 2");
  if (threads < 1) fail("threads", "must be >= 1");
  if (thresholds.empty()) fail("thresholds", "must not be empty");
  adam_init(ParameterSet{}, adam);
}

std::vector<TrainingSample> prepare_labeled(const std::vector<LabeledImage>& items) {
  std::vector<TrainingSample> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back({it.id, preprocess(it.image), it.mask});
  return out;
}

std::vector<PreparedImage> prepare_pool(const std::vector<PoolImage>& items) {
  std::vector<PreparedImage> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back({it.id, preprocess(it.image)});
  return out;
}

TrainResult train(const ParameterSet& init, const TrainingSet& set, int epochs,
                  const TrainingConfig& config, std::uint64_t stream,
                  const AdamState* resume) {
  TrainResult r{init, resume != nullptr ? *resume : adam_init(init, config.adam), {}};
  r.log.extra_missing = set.extra_missing;
  if (epochs <= 0) return r;
  if (set.primary.empty()) throw TrainingError("training set is empty");

  BatchScheduler scheduler(set, config.batch_size,
                           substream(config.seed, "batching", stream));
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const auto batches = scheduler.next_epoch();
    double loss_sum = 0.0;
    double extra_sum = 0.0;
    int extra_count = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<Tensor> inputs;
      std::vector<const NoduleMask*> masks;
      for (const BatchEntry& e : batches[b]) {
        const TrainingSample& s = e.extra ? set.extra[e.index] : set.primary[e.index];
        inputs.push_back(s.input);
        masks.push_back(&s.target);
      }
      const ForwardCache cache = forward_train(r.params, stack_images(inputs));
      const LossResult loss = class_balanced_loss(cache.probabilities, mask_targets(masks));
      if (!std::isfinite(loss.loss)) {
        throw TrainingError(fmt::format("non-finite loss at epoch {} batch {}", epoch, b));
      }
      loss_sum += loss.loss;
      for (std::size_t i = 0; i < batches[b].size(); ++i) {
        if (!batches[b][i].extra) continue;
        extra_sum += image_bce(cache.probabilities, static_cast<int>(i), *masks[i]);
        ++extra_count;
      }
      const ParameterSet grads = backward(r.params, cache, loss.grad_logits);
      adam_step(r.optimizer, r.params, grads);
    }
    r.log.epochs.push_back(
        {epoch, loss_sum / static_cast<double>(batches.size()),
         extra_count > 0 ? extra_sum / extra_count : std::numeric_limits<double>::quiet_NaN()});
  }
  if (!r.params.all_finite()) throw TrainingError("parameters became non-finite");
  return r;
}

TrainResult train_phase1(const std::vector<TrainingSample>& train_split,
                         const TrainingConfig& config, std::uint64_t stream) {
  if (train_split.empty()) throw TrainingError("phase 1 needs a non-empty training split");
  const ParameterSet init = build_network(config.network, init_seed(config.seed, stream));
  TrainingSet set;
  set.primary = train_split;
  return train(init, set, config.epochs, config, stream);
}

ParameterSet transfer_weights(const ParameterSet& source) {
  ParameterSet copy = source;
  return copy;
}

TrainResult train_phase2(const ParameterSet& transferred, const TrainingSet& set,
                         const TrainingConfig& config, std::uint64_t stream) {
  require_layers_match(transferred, config.network);
  return train(transferred, set, config.effective_phase2_epochs(), config, stream);
}

EvalSet predict_eval_set(const ParameterSet& params, const std::vector<TrainingSample>& test) {
  std::vector<const Tensor*> inputs;
  for (const auto& s : test) inputs.push_back(&s.input);
  auto maps = predict(params, inputs);
  EvalSet set;
  for (std::size_t i = 0; i < test.size(); ++i) {
    set.predictions[test[i].id] = std::move(maps[i]);
    set.truths[test[i].id] = test[i].target;
  }
  return set;
}

PhaseEvaluation evaluate(const ParameterSet& params, const std::vector<TrainingSample>& test,
                         const TrainingConfig& config) {
  PhaseEvaluation ev;
  ev.curve = froc_curve(predict_eval_set(params, test), config.thresholds);
  ev.operating_point = select_operating_point(ev.curve, config.min_sensitivity);
  return ev;
}

std::vector<std::vector<std::size_t>> assign_folds(const std::vector<std::string>& ids, int k,
                                                   std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument(fmt::format("k must be >= 2 (got {})", k));
  if (static_cast<std::size_t>(k) > ids.size()) {
    throw std::invalid_argument(
        fmt::format("k = {} exceeds the {} labeled items", k, ids.size()));
  }
  const std::string salt = fmt::format("{}:", seed);
  std::vector<std::pair<std::uint64_t, std::size_t>> ranked;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ranked.emplace_back(fnv1a64(salt + ids[i]), i);
  }
  std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
    return a.first != b.first ? a.first < b.first : ids[a.second] < ids[b.second];
  });
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t r = 0; r < ranked.size(); ++r) folds[r % k].push_back(ranked[r].second);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

const char* source_name(NegativeSource s) {
  switch (s) {
    case NegativeSource::approved: return "approved";
    case NegativeSource::pseudo_negative: return "pseudonegative";
    case NegativeSource::unlabeled: return "unlabeled";
  }
  return "?";
}

FoldSplit split_fold(const std::vector<TrainingSample>& labeled, const TrainingConfig& config,
                     int fold) {
  std::vector<TrainingSample> sorted = labeled;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  FoldSplit split;
  if (fold == -1) {
    split.train = std::move(sorted);
    return split;
  }
  if (fold < 0 || fold >= config.folds) {
    throw std::invalid_argument(
        fmt::format("fold {} outside 1..{}", fold + 1, config.folds));
  }
  std::vector<std::string> ids;
  for (const auto& s : sorted) ids.push_back(s.id);
  const auto folds = assign_folds(ids, config.folds, substream(config.seed, "folds")());
  std::vector<bool> held_out(sorted.size(), false);
  for (std::size_t i : folds[fold]) held_out[i] = true;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    (held_out[i] ? split.test : split.train).push_back(std::move(sorted[i]));
  }
  return split;
}

std::uint64_t fold_stream(int fold, const TrainingConfig& config) {
  const int index = fold < 0 ? config.folds : fold;
  return static_cast<std::uint64_t>(index) * kFoldStreamStride;
}

ExperimentResult run_experiment(const ExperimentData& data, const TrainingConfig& config,
                                bool compare) {
  config.validate();
  const int k = config.folds;
  const int n_compare = compare ? (config.compare_folds < 0 ? k : std::min(k, config.compare_folds)) : 0;
  const std::vector<PreparedImage> no_pool;
  const std::vector<PreparedImage>& pool = data.unlabeled ? *data.unlabeled : no_pool;

  std::vector<FoldReport> reports(k);
  parallel_for(k, config.threads, [&](int f) {
    const std::uint64_t stream = fold_stream(f, config);
    FoldSplit split = split_fold(data.labeled, config, f);
    const std::vector<TrainingSample>& train_split = split.train;
    const std::vector<TrainingSample>& test_split = split.test;

    FoldReport& rep = reports[f];
    rep.fold = f + 1;
    for (const auto& s : test_split) rep.test_ids.push_back(s.id);

    TrainResult p1 = train_phase1(train_split, config, stream + 1);
    rep.phase1_log = std::move(p1.log);
    rep.phase1 = evaluate(p1.params, test_split, config);

    const double threshold =
        config.mining_threshold.value_or(rep.phase1.operating_point.report.threshold);
    rep.mining = mine_pseudo_negatives(p1.params, pool, threshold);

    auto run_source = [&](NegativeSource source, const TrainingSet& set) {
      TrainResult p2 = train_phase2(transfer_weights(p1.params), set, config, stream + 2);
      SourceRun run{source, std::move(p2.log), {}, {}};
      run.evaluation = evaluate(p2.params, test_split, config);
      run.params = std::move(p2.params);
      return run;
    };
    rep.phase2 = run_source(NegativeSource::pseudo_negative,
                            build_phase2_dataset(train_split, rep.mining, pool, config.mix_ratio));
    if (f < n_compare) {
      if (data.approved) {
        rep.others.push_back(run_source(NegativeSource::approved,
                                        with_negatives(train_split, *data.approved, config.mix_ratio)));
      }
      if (data.unlabeled) {
        rep.others.push_back(run_source(NegativeSource::unlabeled,
                                        with_negatives(train_split, *data.unlabeled, config.mix_ratio)));
      }
    }
    rep.phase1_params = std::move(p1.params);
    const FrocReport& a = rep.phase1.operating_point.report;
    const FrocReport& b = rep.phase2.evaluation.operating_point.report;
    rep.delta_sensitivity = b.sensitivity - a.sensitivity;
    rep.delta_fp_per_image = b.fp_per_image - a.fp_per_image;
  });

  ExperimentResult result;
  CrossValidationResult& cv = result.crossval;
  for (const auto& r : reports) {
    cv.phase1_sensitivity += r.phase1.operating_point.report.sensitivity;
    cv.phase1_fp_per_image += r.phase1.operating_point.report.fp_per_image;
    cv.phase2_sensitivity += r.phase2.evaluation.operating_point.report.sensitivity;
    cv.phase2_fp_per_image += r.phase2.evaluation.operating_point.report.fp_per_image;
    cv.delta_sensitivity += r.delta_sensitivity;
    cv.delta_fp_per_image += r.delta_fp_per_image;
  }
  for (double* v : {&cv.phase1_sensitivity, &cv.phase1_fp_per_image, &cv.phase2_sensitivity,
                    &cv.phase2_fp_per_image, &cv.delta_sensitivity, &cv.delta_fp_per_image}) {
    *v /= k;
  }
  cv.folds = std::move(reports);

  if (compare) {
    ComparisonResult cmp;
    for (NegativeSource s : {NegativeSource::approved, NegativeSource::pseudo_negative,
                             NegativeSource::unlabeled}) {
      ComparisonRow row{s, s == NegativeSource::approved ? data.approved.has_value()
                                                         : data.unlabeled.has_value(),
                        0.0, 0.0, 0};
      if (row.present) {
        for (int f = 0; f < n_compare; ++f) {
          const FoldReport& rep = cv.folds[f];
          const SourceRun* run = &rep.phase2;
          if (s != NegativeSource::pseudo_negative) {
            run = nullptr;
            for (const auto& o : rep.others) {
              if (o.source == s) run = &o;
            }
          }
          row.sensitivity += run->evaluation.operating_point.report.sensitivity;
          row.fp_per_image += run->evaluation.operating_point.report.fp_per_image;
          ++row.folds;
        }
        if (row.folds > 0) {
          row.sensitivity /= row.folds;
          row.fp_per_image /= row.folds;
        }
      }
      cmp.rows.push_back(row);
    }
    result.comparison = std::move(cmp);
  }
  return result;
}

CrossValidationResult run_cross_validation(const std::vector<TrainingSample>& labeled,
                                           const std::vector<PreparedImage>& unlabeled,
                                           const TrainingConfig& config) {
  ExperimentData data{labeled, unlabeled, std::nullopt};
  return run_experiment(data, config, false).crossval;
}

ComparisonResult compare_negative_sources(const ExperimentData& data,
                                          const TrainingConfig& config) {
  return *run_experiment(data, config, true).comparison;
}

}  // namespace negmine
