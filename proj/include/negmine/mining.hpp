#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "negmine/detect.hpp"
#include "negmine/network.hpp"
#include "negmine/tensor.hpp"

namespace negmine {

/// A preprocessed (equalized, scaled) image ready for the network.
struct PreparedImage {
  std::string id;
  Tensor input;  // (1, 1, H, W)
};

/// A preprocessed image with its training target.
struct TrainingSample {
  std::string id;
  Tensor input;
  NoduleMask target;
};

struct MiningOutcome {
  std::vector<std::string> pseudo_negative_ids;
  std::vector<std::string> discarded_ids;
  double threshold = 0.5;
  std::map<std::string, int> detection_counts;
  std::string checkpoint_hash;  // filled by callers that have one

  bool operator==(const MiningOutcome&) const = default;
};

/// Probability maps for `images`, evaluated in chunks of `batch_size`.
std::vector<ProbabilityMap> predict(const ParameterSet& params,
                                    const std::vector<const Tensor*>& images,
                                    int batch_size = 16);

/// An image is pseudo-negative iff binarize + connected_components of its
/// prediction yields no detection at `threshold`. Id lists keep pool order.
MiningOutcome mine_pseudo_negatives(const ParameterSet& params,
                                    const std::vector<PreparedImage>& pool,
                                    double threshold);

/// Primary (labeled) samples plus extra all-negative samples mixed into every
/// batch at `mix_ratio` = fraction of each batch drawn from primary.
struct TrainingSet {
  std::vector<TrainingSample> primary;
  std::vector<TrainingSample> extra;
  double mix_ratio = 1.0;
  bool extra_missing = false;  // phase 2 asked for extra data but got none
};

/// Pool images in outcome.pseudo_negative_ids become extra samples with empty
/// masks. Throws std::invalid_argument unless mix_ratio is in (0, 1] or when
/// a mined id is absent from `pool`.
TrainingSet build_phase2_dataset(const std::vector<TrainingSample>& labeled,
                                 const MiningOutcome& mined,
                                 const std::vector<PreparedImage>& pool,
                                 double mix_ratio);

/// Every image of `negatives` as an extra sample with an empty mask.
TrainingSet with_negatives(const std::vector<TrainingSample>& labeled,
                           const std::vector<PreparedImage>& negatives,
                           double mix_ratio);

struct BatchEntry {
  bool extra = false;
  std::size_t index = 0;

  bool operator==(const BatchEntry&) const = default;
};

using Batch = std::vector<BatchEntry>;

/// Produces the batches of successive epochs. Each batch takes
/// round(batch_size * mix_ratio) primary samples (at least 1) and fills the
/// rest from extra; an epoch is one shuffled pass over primary. Extra samples
/// are drawn from a reshuffled cycle that persists across epochs.
class BatchScheduler {
 public:
  BatchScheduler(const TrainingSet& set, int batch_size, std::mt19937_64 rng);

  std::vector<Batch> next_epoch();
  int primary_per_batch() const { return primary_per_batch_; }

 private:
  std::size_t next_extra();

  std::size_t n_primary_;
  std::size_t n_extra_;
  int primary_per_batch_;
  int extra_per_batch_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> extra_order_;
  std::size_t extra_cursor_ = 0;
};

}  // namespace negmine
