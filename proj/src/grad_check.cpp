#include "negmine/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

namespace negmine {

std::string GradCheckReport::summary() const {
  return fmt::format(
      "{} max_rel_err={:.3e} (tol {:.1e}) at index {}: analytic={:.9g} "
      "numeric={:.9g}",
      passed ? "PASS" : "FAIL", max_relative_error, tolerance, worst_index,
      analytic_at_worst, numeric_at_worst);
}

GradCheckReport grad_check(const Objective& objective, const Gradient& gradient,
                           const Tensor& point, double tolerance,
                           double step) {
  const Tensor analytic = gradient(point);
  require_same_shape(analytic.shape(), point.shape(), "grad_check gradient");

  GradCheckReport report;
  report.tolerance = tolerance;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double x0 = point[i];
    probe[i] = x0 + step;
    const double plus = objective(probe);
    probe[i] = x0 - step;
    const double minus = objective(probe);
    probe[i] = x0;

    const double numeric = (plus - minus) / (2.0 * step);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    const double err = std::abs(a - numeric) / denom;
    if (err > report.max_relative_error || i == 0) {
      report.max_relative_error = err;
      report.worst_index = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
  }
  report.passed = std::isfinite(report.max_relative_error) &&
                  report.max_relative_error <= tolerance;
  return report;
}

Objective contract_with(std::function<Tensor(const Tensor&)> op,
                        Tensor weights) {
  return [op = std::move(op), weights = std::move(weights)](const Tensor& x) {
    const Tensor y = op(x);
    require_same_shape(y.shape(), weights.shape(), "contract_with");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * weights[i];
    return acc;
  };
}

}  // namespace negmine
