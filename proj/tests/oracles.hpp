#pragma once
// Reference implementations written independently of the library, shared by
// the unit tests and the acceptance run.

#include <random>
#include <vector>

#include "negmine/detect.hpp"
#include "negmine/image.hpp"
#include "negmine/tensor.hpp"

namespace negmine::oracle {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);

// Zero-padded cross-correlation straight from the definition.
Tensor naive_conv(const Tensor& x, const Tensor& k, const std::vector<double>& b, int stride,
                  int pad);

// Textbook CDF formula in floating point, half-way cases rounded up.
Image reference_equalize(const Image& img);

// Random size and level range, so both sparse and dense histograms occur.
Image random_image(std::mt19937_64& rng);

// 8-connected flood fill; -1 is background.
std::vector<int> flood_labels(const std::vector<int>& on, int w, int h, int* count);

struct Counts {
  int tp, fp, fn;
};

// Exhaustive search over every assignment of detections to distinct eligible
// ground-truth components, keeping the one with the most hits.
Counts brute_force_froc(const std::vector<double>& probs, const std::vector<int>& truth, int w,
                        int h, double threshold);

struct FrocInstance {
  int w = 8, h = 8;
  std::vector<int> truth;
  std::vector<double> probs;
  EvalSet as_eval_set() const;
};

// Tiny 8x8 instance with one to three ground-truth components.
FrocInstance random_froc_instance(std::mt19937_64& rng);

}  // namespace negmine::oracle
