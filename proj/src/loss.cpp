#include "negmine/loss.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

namespace negmine {

LossResult class_balanced_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred.shape(), target.shape(), "class_balanced_loss");
  const std::size_t n = pred.size();
  LossResult r;
  r.grad_logits = Tensor(pred.shape());
  if (n == 0) return r;

  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (target[i] > 0.5) ++n_pos;
  }
  const std::size_t n_neg = n - n_pos;
  const double total = static_cast<double>(n);
  r.positive_weight = n_pos > 0 ? total / (2.0 * n_pos) : 1.0;
  r.negative_weight = n_neg > 0 ? total / (2.0 * n_neg) : 1.0;

  const double pos_scale = r.positive_weight / total;
  const double neg_scale = r.negative_weight / total;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = pred[i];
    const double clipped = std::clamp(p, kProbabilityClip, 1.0 - kProbabilityClip);
    if (target[i] > 0.5) {
      acc += r.positive_weight * std::log(clipped);
      r.grad_logits[i] = -pos_scale * (1.0 - p);
    } else {
      acc += r.negative_weight * std::log1p(-clipped);
      r.grad_logits[i] = neg_scale * p;
    }
  }
  r.loss = -acc / total;
  return r;
}

Tensor mask_targets(const std::vector<const NoduleMask*>& masks) {
  if (masks.empty()) return Tensor(Shape{0, 1, 0, 0});
  const int w = masks.front()->width;
  const int h = masks.front()->height;
  Tensor t(Shape{static_cast<int>(masks.size()), 1, h, w});
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const NoduleMask& m = *masks[i];
    if (m.width != w || m.height != h) {
      throw ShapeError(fmt::format("mask_targets: mask {} is {}x{}, expected {}x{}",
                                   i, m.width, m.height, w, h));
    }
    for (std::size_t j = 0; j < m.bits.size(); ++j) {
      t[i * m.bits.size() + j] = m.bits[j] ? 1.0 : 0.0;
    }
  }
  return t;
}

}  // namespace negmine
