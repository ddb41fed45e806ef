#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "negmine/detect.hpp"
#include "negmine/image.hpp"

namespace negmine {

struct SynthConfig {
  int image_size = 64;
  int n_labeled = 200;
  int n_unlabeled = 300;
  int n_true_negative = 200;
  double positive_rate_in_unlabeled = 0.4;
  double nodule_radius_min = 3.0;
  double nodule_radius_max = 6.5;
  double distractor_density = 3.0;  // expected distractors per image
  double noise_level = 0.05;        // noise sigma as a fraction of full range
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct LabeledImage {
  std::string id;
  Image image;
  NoduleMask mask;
};

struct PoolImage {
  std::string id;
  Image image;
};

/// Labeled cases carry masks; the unlabeled pool and true negatives do not.
/// Hidden truth for both pools is kept apart for auditing and must never
/// reach training.
struct SynthDataset {
  std::vector<LabeledImage> labeled;
  std::vector<PoolImage> unlabeled;
  std::vector<PoolImage> true_negatives;
  std::map<std::string, NoduleMask> hidden_truth;
};

/// Positive images hold 1-3 Gaussian-profile nodules; every image gets a
/// smooth background, rib-like bands, bright specks and line crossings
/// (never in the mask), and additive noise. Exactly
/// round(rate * n_unlabeled) pool images are positive.
SynthDataset generate_dataset(const SynthConfig& cfg);

/// One image with `nodules` nodules (0 for a negative). Exposed for tests.
LabeledImage synthesize_image(const SynthConfig& cfg, const std::string& id,
                              int nodules, std::uint64_t stream_index);

}  // namespace negmine
