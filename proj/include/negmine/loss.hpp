#pragma once

#include "negmine/detect.hpp"
#include "negmine/tensor.hpp"

namespace negmine {

inline constexpr double kProbabilityClip = 1e-7;

struct LossResult {
  double loss = 0.0;
  Tensor grad_logits;  // dLoss/dz with p = sigmoid(z)
  double positive_weight = 1.0;
  double negative_weight = 1.0;
};

/// Class-balanced binary cross-entropy over a batch,
///   L = -(1/N) Σ [w_pos·y·log p + w_neg·(1-y)·log(1-p)],
/// w_pos = N / (2·N_pos), w_neg = N / (2·N_neg), with w = 1 for a class absent
/// from the batch. Probabilities are clipped to [1e-7, 1 - 1e-7] inside the
/// logs. `target` holds 0/1 values with the same shape as `pred`.
LossResult class_balanced_loss(const Tensor& pred, const Tensor& target);

/// Targets for a batch of masks as a (N, 1, H, W) tensor of 0/1 values.
Tensor mask_targets(const std::vector<const NoduleMask*>& masks);

}  // namespace negmine
