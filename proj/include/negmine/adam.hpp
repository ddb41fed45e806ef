#pragma once

#include <cstdint>
#include <stdexcept>

#include "negmine/network.hpp"

namespace negmine {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamHyper&) const = default;
};

/// First/second moment estimates shaped like the parameters they drive.
struct AdamState {
  AdamHyper hyper;
  ParameterSet m;
  ParameterSet v;
  std::uint64_t t = 0;

  bool operator==(const AdamState&) const = default;
};

/// Throws std::invalid_argument for lr <= 0, beta outside [0, 1) or eps <= 0.
AdamState adam_init(const ParameterSet& params, const AdamHyper& hyper = {});

/// One bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, ParameterSet& params, const ParameterSet& grads);

}  // namespace negmine
