#include "negmine/adam.hpp"

#include <cmath>

#include <fmt/core.h>

namespace negmine {
namespace {

void require_aligned(const ParameterSet& a, const ParameterSet& b, const char* what) {
  if (a.layers.size() != b.layers.size()) {
    throw ShapeError(fmt::format("{}: {} layers vs {}", what, a.layers.size(),
                                 b.layers.size()));
  }
  auto ib = b.layers.begin();
  for (const auto& [id, la] : a.layers) {
    if (ib->first != id) {
      throw ShapeError(fmt::format("{}: layer '{}' vs '{}'", what, id, ib->first));
    }
    require_same_shape(la.weights.shape(), ib->second.weights.shape(), what);
    if (la.bias.size() != ib->second.bias.size()) {
      throw ShapeError(fmt::format("{}: bias size mismatch in layer '{}'", what, id));
    }
    ++ib;
  }
}

}  // namespace

AdamState adam_init(const ParameterSet& params, const AdamHyper& hyper) {
  if (!(hyper.lr > 0.0)) {
    throw std::invalid_argument(fmt::format("adam: lr must be > 0 (got {})", hyper.lr));
  }
  if (!(hyper.beta1 >= 0.0 && hyper.beta1 < 1.0)) {
    throw std::invalid_argument(
        fmt::format("adam: beta1 must lie in [0, 1) (got {})", hyper.beta1));
  }
  if (!(hyper.beta2 >= 0.0 && hyper.beta2 < 1.0)) {
    throw std::invalid_argument(
        fmt::format("adam: beta2 must lie in [0, 1) (got {})", hyper.beta2));
  }
  if (!(hyper.eps > 0.0)) {
    throw std::invalid_argument(fmt::format("adam: eps must be > 0 (got {})", hyper.eps));
  }
  return AdamState{hyper, zeros_like(params), zeros_like(params), 0};
}

void adam_step(AdamState& state, ParameterSet& params, const ParameterSet& grads) {
  require_aligned(params, grads, "adam_step gradients");
  require_aligned(params, state.m, "adam_step state");

  state.t += 1;
  const AdamHyper& h = state.hyper;
  const double t = static_cast<double>(state.t);
  const double correct1 = 1.0 - std::pow(h.beta1, t);
  const double correct2 = 1.0 - std::pow(h.beta2, t);

  auto update = [&](double& theta, double& m, double& v, double g) {
    m = h.beta1 * m + (1.0 - h.beta1) * g;
    v = h.beta2 * v + (1.0 - h.beta2) * g * g;
    const double m_hat = m / correct1;
    const double v_hat = v / correct2;
    theta -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
  };

  auto im = state.m.layers.begin();
  auto iv = state.v.layers.begin();
  auto ig = grads.layers.begin();
  for (auto& [id, layer] : params.layers) {
    Layer& m = im->second;
    Layer& v = iv->second;
    const Layer& g = ig->second;
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      update(layer.weights[i], m.weights[i], v.weights[i], g.weights[i]);
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      update(layer.bias[i], m.bias[i], v.bias[i], g.bias[i]);
    }
    ++im;
    ++iv;
    ++ig;
  }
}

}  // namespace negmine
