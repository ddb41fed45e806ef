#include "negmine/mining.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include <fmt/core.h>

#include "negmine/image.hpp"
#include "negmine/random.hpp"

namespace negmine {
namespace {

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

void check_mix(double mix_ratio) {
  if (!(mix_ratio > 0.0 && mix_ratio <= 1.0)) {
    throw std::invalid_argument(
        fmt::format("mix_ratio must lie in (0, 1] (got {})", mix_ratio));
  }
}

TrainingSample negative_sample(const PreparedImage& img) {
  const Shape& s = img.input.shape();
  return {img.id, img.input, NoduleMask(s.w, s.h)};
}

}  // namespace

std::vector<ProbabilityMap> predict(const ParameterSet& params,
                                    const std::vector<const Tensor*>& images,
                                    int batch_size) {
  std::vector<ProbabilityMap> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t end = std::min(images.size(), start + batch_size);
    std::vector<Tensor> chunk;
    for (std::size_t i = start; i < end; ++i) chunk.push_back(*images[i]);
    const Tensor probs = forward(params, stack_images(chunk));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      out.push_back(probability_map(probs, static_cast<int>(i)));
    }
  }
  return out;
}

MiningOutcome mine_pseudo_negatives(const ParameterSet& params,
                                    const std::vector<PreparedImage>& pool,
                                    double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument(
        fmt::format("mining threshold must lie in (0, 1) (got {})", threshold));
  }
  std::vector<const Tensor*> inputs;
  for (const auto& p : pool) inputs.push_back(&p.input);
  const auto maps = predict(params, inputs);

  MiningOutcome outcome;
  outcome.threshold = threshold;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto dets = connected_components(binarize(maps[i], threshold), &maps[i]);
    const int n = static_cast<int>(dets.size());
    outcome.detection_counts[pool[i].id] = n;
    (n == 0 ? outcome.pseudo_negative_ids : outcome.discarded_ids).push_back(pool[i].id);
  }
  return outcome;
}

TrainingSet build_phase2_dataset(const std::vector<TrainingSample>& labeled,
                                 const MiningOutcome& mined,
                                 const std::vector<PreparedImage>& pool,
                                 double mix_ratio) {
  check_mix(mix_ratio);
  std::map<std::string, const PreparedImage*> by_id;
  for (const auto& p : pool) by_id[p.id] = &p;

  TrainingSet set;
  set.primary = labeled;
  set.mix_ratio = mix_ratio;
  for (const auto& id : mined.pseudo_negative_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw std::invalid_argument(fmt::format("mined id '{}' is not in the pool", id));
    }
    set.extra.push_back(negative_sample(*it->second));
  }
  set.extra_missing = set.extra.empty() && mix_ratio < 1.0;
  return set;
}

TrainingSet with_negatives(const std::vector<TrainingSample>& labeled,
                           const std::vector<PreparedImage>& negatives,
                           double mix_ratio) {
  check_mix(mix_ratio);
  TrainingSet set;
  set.primary = labeled;
  set.mix_ratio = mix_ratio;
  for (const auto& n : negatives) set.extra.push_back(negative_sample(n));
  set.extra_missing = set.extra.empty() && mix_ratio < 1.0;
  return set;
}

BatchScheduler::BatchScheduler(const TrainingSet& set, int batch_size, std::mt19937_64 rng)
    : n_primary_(set.primary.size()), n_extra_(set.extra.size()), rng_(std::move(rng)) {
  if (batch_size < 1) {
    throw std::invalid_argument(fmt::format("batch_size must be >= 1 (got {})", batch_size));
  }
  check_mix(set.mix_ratio);
  if (n_extra_ == 0 || set.mix_ratio >= 1.0) {
    primary_per_batch_ = batch_size;
    extra_per_batch_ = 0;
  } else {
    primary_per_batch_ = std::clamp(
        static_cast<int>(std::lround(batch_size * set.mix_ratio)), 1, batch_size);
    extra_per_batch_ = batch_size - primary_per_batch_;
  }
  extra_order_.resize(n_extra_);
  std::iota(extra_order_.begin(), extra_order_.end(), 0);
  shuffle(extra_order_, rng_);
}

std::size_t BatchScheduler::next_extra() {
  if (extra_cursor_ == extra_order_.size()) {
    shuffle(extra_order_, rng_);
    extra_cursor_ = 0;
  }
  return extra_order_[extra_cursor_++];
}

std::vector<Batch> BatchScheduler::next_epoch() {
  std::vector<std::size_t> order(n_primary_);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng_);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += primary_per_batch_) {
    Batch b;
    const std::size_t end = std::min(order.size(), start + primary_per_batch_);
    for (std::size_t i = start; i < end; ++i) b.push_back({false, order[i]});
    for (int k = 0; k < extra_per_batch_; ++k) b.push_back({true, next_extra()});
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace negmine
