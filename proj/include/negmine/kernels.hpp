#pragma once

#include <vector>

#include "negmine/tensor.hpp"

namespace negmine {

// Forward/backward kernels used by the segmentation network. Every kernel is a
// pure function of its arguments and is deterministic.

/// Cross-correlation. `kernels` is laid out as (out_channels, in_channels, K, K)
/// with K odd; `bias` holds one value per output channel.
Tensor conv2d(const Tensor& input, const Tensor& kernels,
              const std::vector<double>& bias, int stride = 1,
              int padding = 0);

struct ConvGrads {
  Tensor input;  // empty when not requested
  Tensor kernels;
  std::vector<double> bias;
};

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                          const Tensor& upstream, int stride = 1,
                          int padding = 0, bool want_input_grad = true);

/// Output spatial extent of a convolution along one axis.
int conv_output_extent(int extent, int kernel, int stride, int padding);

enum class PoolMode { max, mean };

struct PoolResult {
  Tensor output;
  // Flat input offset of each output cell's maximum (max mode only).
  std::vector<std::size_t> argmax;
};

/// Non-overlapping pooling; spatial dims must be divisible by `window`.
PoolResult pool2d(const Tensor& input, int window, PoolMode mode);

Tensor pool2d_backward(const Tensor& upstream, const Shape& input_shape,
                       int window, PoolMode mode,
                       const std::vector<std::size_t>& argmax = {});

/// Stride-1 mean filter over a `window`×`window` neighbourhood with zero
/// padding; the divisor is always window². Used by the inception pool branch.
Tensor box_filter(const Tensor& input, int window);
Tensor box_filter_backward(const Tensor& upstream, int window);

/// Nearest-neighbour upsampling by an integer factor ≥ 2.
Tensor upsample2d(const Tensor& input, int factor);
Tensor upsample2d_backward(const Tensor& upstream, int factor);

enum class Activation { relu, sigmoid };

Tensor activation(const Tensor& input, Activation kind);

/// For relu pass the forward input, for sigmoid the forward output.
Tensor activation_backward(const Tensor& forward_value, const Tensor& upstream,
                           Activation kind);

double sigmoid(double x);

/// Stacks `a` then `b` along the channel axis.
Tensor channel_concat(const Tensor& a, const Tensor& b);

struct ConcatGrads {
  Tensor a;
  Tensor b;
};

ConcatGrads channel_concat_backward(const Tensor& upstream, int channels_a);

}  // namespace negmine
