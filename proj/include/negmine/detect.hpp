#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "negmine/tensor.hpp"

namespace negmine {

/// Binary per-pixel nodule labels (1 = nodule).
struct NoduleMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  NoduleMask() = default;
  NoduleMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  bool operator==(const NoduleMask&) const = default;
};

/// Per-pixel nodule probability for one image.
struct ProbabilityMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Slices image n of an (N, 1, H, W) probability tensor.
ProbabilityMap probability_map(const Tensor& probs, int n);

/// Probability 1 on mask pixels and 0 elsewhere.
ProbabilityMap probability_map(const NoduleMask& mask);

struct Pixel {
  int x = 0;
  int y = 0;
  bool operator==(const Pixel&) const = default;
};

struct Detection {
  std::vector<Pixel> pixels;  // raster order
  double cx = 0.0;
  double cy = 0.0;
  double score = 0.0;  // max probability inside the component
};

/// bit = 1 iff probability > threshold.
NoduleMask binarize(const ProbabilityMap& probs, double threshold);

/// 8-connected components in raster order of their first pixel. Scores come
/// from `probs`, or are 1 when no map is given.
std::vector<Detection> connected_components(const NoduleMask& mask,
                                            const ProbabilityMap* probs = nullptr);

struct MatchResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  // (detection index, ground-truth component index)
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/// A detection hits when its rounded centroid lies inside a ground-truth
/// component. Detections are visited by descending score (ties: ascending
/// centroid x, then y) and each component accepts at most one hit.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const NoduleMask& truth);

class EvaluationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EvalSet {
  std::map<std::string, ProbabilityMap> predictions;
  std::map<std::string, NoduleMask> truths;
};

struct ImageCounts {
  std::string id;
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

struct FrocReport {
  double threshold = 0.0;
  std::vector<ImageCounts> per_image;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double sensitivity = 0.0;
  double fp_per_image = 0.0;
};

/// Aggregated counts over the set at one threshold. A set without any
/// ground-truth nodule has sensitivity 1.
FrocReport froc_point(const EvalSet& set, double threshold);

/// Thresholds must be non-empty and strictly descending.
std::vector<FrocReport> froc_curve(const EvalSet& set,
                                   const std::vector<double>& thresholds);

/// 0.99, 0.98, ..., 0.01.
std::vector<double> default_thresholds();

struct OperatingPoint {
  FrocReport report;
  bool qualified = false;  // false: no point reached min_sensitivity
};

/// Smallest fp_per_image among points with sensitivity >= min_sensitivity,
/// ties to higher sensitivity then higher threshold. Falls back to the
/// highest-sensitivity point (fewest FP among those) when none qualifies.
OperatingPoint select_operating_point(const std::vector<FrocReport>& curve,
                                      double min_sensitivity);

}  // namespace negmine
