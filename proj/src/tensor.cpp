#include "negmine/tensor.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

namespace negmine {

std::string to_string(const Shape& s) {
  return fmt::format("[{}, {}, {}, {}]", s.n, s.c, s.h, s.w);
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative tensor dimension in " + to_string(shape));
  }
  data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError(fmt::format("tensor {} needs {} values, got {}",
                                 to_string(shape_), shape_.numel(),
                                 data_.size()));
  }
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(
        fmt::format("{}: shape {} != {}", what, to_string(a), to_string(b)));
  }
}

}  // namespace negmine
