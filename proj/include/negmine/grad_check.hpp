#pragma once

#include <functional>
#include <string>

#include "negmine/tensor.hpp"

namespace negmine {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  double tolerance = 0.0;
  bool passed = false;

  std::string summary() const;
};

/// Scalar objective of a tensor argument, and its analytic gradient.
using Objective = std::function<double(const Tensor&)>;
using Gradient = std::function<Tensor(const Tensor&)>;

/// Compares `gradient(point)` with a central finite difference of `objective`
/// (step 1e-5). Relative error per element is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport grad_check(const Objective& objective, const Gradient& gradient,
                           const Tensor& point, double tolerance,
                           double step = 1e-5);

/// Contracts an op's output with a fixed `weights` tensor, giving the scalar
/// objective sum(weights * op(x)); its gradient is op_backward(x, weights).
Objective contract_with(std::function<Tensor(const Tensor&)> op,
                        Tensor weights);

}  // namespace negmine
