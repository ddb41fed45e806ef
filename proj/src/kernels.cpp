#include "negmine/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>
#include <fmt/core.h>

namespace negmine {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  int in_c, h, w, k, stride, pad, out_h, out_w;

  int rows() const { return in_c * k * k; }
  int cols() const { return out_h * out_w; }
  bool direct() const { return k == 1 && stride == 1 && pad == 0; }
};

ConvGeometry check_conv(const Shape& in, const Shape& ker,
                        std::size_t bias_size, int stride, int padding) {
  if (ker.h != ker.w || ker.h % 2 == 0) {
    throw ShapeError(fmt::format("conv2d: kernel {} must be square and odd",
                                 to_string(ker)));
  }
  if (ker.c != in.c) {
    throw ShapeError(fmt::format(
        "conv2d: input {} has {} channels but kernels {} expect {}",
        to_string(in), in.c, to_string(ker), ker.c));
  }
  if (bias_size != static_cast<std::size_t>(ker.n)) {
    throw ShapeError(fmt::format("conv2d: bias has {} values for {} kernels",
                                 bias_size, ker.n));
  }
  if (stride < 1 || padding < 0) {
    throw ShapeError(fmt::format("conv2d: invalid stride {} / padding {}",
                                 stride, padding));
  }
  const int oh = conv_output_extent(in.h, ker.h, stride, padding);
  const int ow = conv_output_extent(in.w, ker.w, stride, padding);
  if (oh < 1 || ow < 1) {
    throw ShapeError(fmt::format("conv2d: input {} too small for kernels {}",
                                 to_string(in), to_string(ker)));
  }
  return {in.c, in.h, in.w, ker.h, stride, padding, oh, ow};
}

void im2col(const double* src, const ConvGeometry& g, double* col) {
  for (int ci = 0; ci < g.in_c; ++ci) {
    const double* plane = src + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          double* row = col + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.h) {
            std::fill(row, row + g.out_w, 0.0);
            continue;
          }
          const double* line = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            row[ox] = (ix < 0 || ix >= g.w) ? 0.0 : line[ix];
          }
        }
        col += static_cast<std::size_t>(g.cols());
      }
    }
  }
}

void col2im(const double* col, const ConvGeometry& g, double* dst) {
  for (int ci = 0; ci < g.in_c; ++ci) {
    double* plane = dst + static_cast<std::size_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const double* row = col + static_cast<std::size_t>(oy) * g.out_w;
          double* line = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) line[ix] += row[ox];
          }
        }
        col += static_cast<std::size_t>(g.cols());
      }
    }
  }
}

// Direct stride-1 convolution: each kernel tap is an axpy over a row
// segment. Avoids the im2col buffer, which dominates for few output
// channels on large planes.
struct RowSpan {
  int out_begin, out_end;  // valid output columns for this tap
  int shift;               // input column = output column + shift
};

RowSpan tap_span(const ConvGeometry& g, int kx) {
  const int shift = kx - g.pad;
  return {std::max(0, -shift), std::min(g.out_w, g.w - shift), shift};
}

// Up to kBlock output planes are updated together so that each input row
// segment is loaded once per tap.
constexpr int kBlock = 4;

void direct_forward(const double* src, const double* weights, const double* bias,
                    int out_c, const ConvGeometry& g, double* dst) {
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  const int taps = g.k * g.k;
  for (int co = 0; co < out_c; ++co) {
    std::fill(dst + co * out_plane, dst + (co + 1) * out_plane, bias[co]);
  }
  for (int c0 = 0; c0 < out_c; c0 += kBlock) {
    const int nb = std::min(kBlock, out_c - c0);
    for (int y = 0; y < g.out_h; ++y) {
      double* orow[kBlock];
      for (int b = 0; b < nb; ++b) {
        orow[b] = dst + (c0 + b) * out_plane + static_cast<std::size_t>(y) * g.out_w;
      }
      for (int ci = 0; ci < g.in_c; ++ci) {
        const double* in = src + ci * in_plane;
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = y - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const double* irow = in + static_cast<std::size_t>(iy) * g.w;
          for (int kx = 0; kx < g.k; ++kx) {
            const RowSpan s = tap_span(g, kx);
            const double* __restrict ip = irow + s.shift;
            const int t = ky * g.k + kx;
            if (nb == kBlock) {
              const double w0 = weights[((c0 + 0) * g.in_c + ci) * taps + t];
              const double w1 = weights[((c0 + 1) * g.in_c + ci) * taps + t];
              const double w2 = weights[((c0 + 2) * g.in_c + ci) * taps + t];
              const double w3 = weights[((c0 + 3) * g.in_c + ci) * taps + t];
              double* __restrict o0 = orow[0];
              double* __restrict o1 = orow[1];
              double* __restrict o2 = orow[2];
              double* __restrict o3 = orow[3];
              for (int x = s.out_begin; x < s.out_end; ++x) {
                const double v = ip[x];
                o0[x] += w0 * v;
                o1[x] += w1 * v;
                o2[x] += w2 * v;
                o3[x] += w3 * v;
              }
            } else {
              for (int b = 0; b < nb; ++b) {
                const double wv = weights[((c0 + b) * g.in_c + ci) * taps + t];
                double* __restrict o = orow[b];
                for (int x = s.out_begin; x < s.out_end; ++x) o[x] += wv * ip[x];
              }
            }
          }
        }
      }
    }
  }
}

double dot8(const double* __restrict a, const double* __restrict b, int n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) +
         tail;
}

void direct_weight_grad(const double* src, const double* up, int out_c,
                        const ConvGeometry& g, double* grad_w) {
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  const int taps = g.k * g.k;
  for (int co = 0; co < out_c; ++co) {
    const double* u = up + co * out_plane;
    for (int ci = 0; ci < g.in_c; ++ci) {
      const double* in = src + ci * in_plane;
      double* gw = grad_w + (static_cast<std::size_t>(co) * g.in_c + ci) * taps;
      for (int ky = 0; ky < g.k; ++ky) {
        const int y0 = std::max(0, g.pad - ky);
        const int y1 = std::min(g.out_h, g.h + g.pad - ky);
        for (int kx = 0; kx < g.k; ++kx) {
          const RowSpan s = tap_span(g, kx);
          const int len = s.out_end - s.out_begin;
          double acc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const int iy = y - g.pad + ky;
            acc += dot8(u + static_cast<std::size_t>(y) * g.out_w + s.out_begin,
                        in + static_cast<std::size_t>(iy) * g.w + s.out_begin + s.shift, len);
          }
          gw[ky * g.k + kx] += acc;
        }
      }
    }
  }
}

// Transposed direct convolution: grad_in[ci] += sum over co of the flipped
// scatter of up[co]. Blocked over input channels like the forward pass.
void direct_input_grad(const double* weights, const double* up, int out_c,
                       const ConvGeometry& g, double* grad_in) {
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  const int taps = g.k * g.k;
  for (int c0 = 0; c0 < g.in_c; c0 += kBlock) {
    const int nb = std::min(kBlock, g.in_c - c0);
    for (int y = 0; y < g.out_h; ++y) {
      for (int co = 0; co < out_c; ++co) {
        const double* __restrict urow = up + co * out_plane + static_cast<std::size_t>(y) * g.out_w;
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = y - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (int kx = 0; kx < g.k; ++kx) {
            const RowSpan s = tap_span(g, kx);
            const int t = ky * g.k + kx;
            double* grow[kBlock];
            double wv[kBlock];
            for (int b = 0; b < nb; ++b) {
              grow[b] = grad_in + (c0 + b) * in_plane + static_cast<std::size_t>(iy) * g.w +
                        s.shift;
              wv[b] = weights[(static_cast<std::size_t>(co) * g.in_c + c0 + b) * taps + t];
            }
            if (nb == kBlock) {
              double* __restrict g0 = grow[0];
              double* __restrict g1 = grow[1];
              double* __restrict g2 = grow[2];
              double* __restrict g3 = grow[3];
              for (int x = s.out_begin; x < s.out_end; ++x) {
                const double v = urow[x];
                g0[x] += wv[0] * v;
                g1[x] += wv[1] * v;
                g2[x] += wv[2] * v;
                g3[x] += wv[3] * v;
              }
            } else {
              for (int b = 0; b < nb; ++b) {
                double* __restrict gr = grow[b];
                for (int x = s.out_begin; x < s.out_end; ++x) gr[x] += wv[b] * urow[x];
              }
            }
          }
        }
      }
    }
  }
}

bool use_direct(const ConvGeometry& g) {
  return g.stride == 1 && g.out_w >= 32 && !g.direct();
}

void check_pool(const Shape& s, int window, const char* name) {
  if (window < 1 || s.h % window != 0 || s.w % window != 0) {
    throw ShapeError(fmt::format(
        "{}: spatial dims of {} not divisible by window {}", name,
        to_string(s), window));
  }
}

}  // namespace

int conv_output_extent(int extent, int kernel, int stride, int padding) {
  return (extent + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels,
              const std::vector<double>& bias, int stride, int padding) {
  const Shape& in = input.shape();
  const Shape& ker = kernels.shape();
  const ConvGeometry g = check_conv(in, ker, bias.size(), stride, padding);

  Tensor out(Shape{in.n, ker.n, g.out_h, g.out_w});
  ConstMatrixMap weights(kernels.data().data(), ker.n, g.rows());
  std::vector<double> col(g.direct() ? 0 : static_cast<std::size_t>(g.rows()) *
                                               g.cols());

  if (use_direct(g)) {
    for (int n = 0; n < in.n; ++n) {
      direct_forward(input.plane(n, 0), kernels.data().data(), bias.data(), ker.n, g,
                     out.plane(n, 0));
    }
    return out;
  }
  for (int n = 0; n < in.n; ++n) {
    const double* src = input.plane(n, 0);
    if (!g.direct()) {
      im2col(src, g, col.data());
      src = col.data();
    }
    ConstMatrixMap cols(src, g.rows(), g.cols());
    MatrixMap dst(out.plane(n, 0), ker.n, g.cols());
    dst.noalias() = weights * cols;
    for (int c = 0; c < ker.n; ++c) dst.row(c).array() += bias[c];
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                          const Tensor& upstream, int stride, int padding,
                          bool want_input_grad) {
  const Shape& in = input.shape();
  const Shape& ker = kernels.shape();
  const ConvGeometry g =
      check_conv(in, ker, static_cast<std::size_t>(ker.n), stride, padding);
  require_same_shape(upstream.shape(), Shape{in.n, ker.n, g.out_h, g.out_w},
                     "conv2d_backward upstream");

  ConvGrads grads;
  grads.kernels = Tensor(ker);
  grads.bias.assign(ker.n, 0.0);
  if (want_input_grad) grads.input = Tensor(in);

  if (use_direct(g)) {
    const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
    for (int n = 0; n < in.n; ++n) {
      const double* up = upstream.plane(n, 0);
      for (int c = 0; c < ker.n; ++c) {
        const double* u = up + c * out_plane;
        double acc = 0.0;
        for (std::size_t i = 0; i < out_plane; ++i) acc += u[i];
        grads.bias[c] += acc;
      }
      direct_weight_grad(input.plane(n, 0), up, ker.n, g, grads.kernels.data().data());
      if (want_input_grad) {
        direct_input_grad(kernels.data().data(), up, ker.n, g, grads.input.plane(n, 0));
      }
    }
    return grads;
  }

  ConstMatrixMap weights(kernels.data().data(), ker.n, g.rows());
  MatrixMap grad_w(grads.kernels.data().data(), ker.n, g.rows());
  const std::size_t col_size = static_cast<std::size_t>(g.rows()) * g.cols();
  std::vector<double> col(g.direct() ? 0 : col_size);
  std::vector<double> grad_col(g.direct() || !want_input_grad ? 0 : col_size);

  for (int n = 0; n < in.n; ++n) {
    ConstMatrixMap up(upstream.plane(n, 0), ker.n, g.cols());
    // Fixed summation order; Eigen's reduction depends on buffer alignment.
    for (int c = 0; c < ker.n; ++c) {
      const double* row = upstream.plane(n, c);
      double s = 0;
      for (int i = 0; i < g.cols(); ++i) s += row[i];
      grads.bias[c] += s;
    }

    const double* src = input.plane(n, 0);
    if (!g.direct()) {
      im2col(src, g, col.data());
      src = col.data();
    }
    ConstMatrixMap cols(src, g.rows(), g.cols());
    grad_w.noalias() += up * cols.transpose();

    if (!want_input_grad) continue;
    if (g.direct()) {
      MatrixMap dst(grads.input.plane(n, 0), g.rows(), g.cols());
      dst.noalias() = weights.transpose() * up;
    } else {
      MatrixMap gcol(grad_col.data(), g.rows(), g.cols());
      gcol.noalias() = weights.transpose() * up;
      col2im(grad_col.data(), g, grads.input.plane(n, 0));
    }
  }
  return grads;
}

PoolResult pool2d(const Tensor& input, int window, PoolMode mode) {
  const Shape& s = input.shape();
  check_pool(s, window, "pool2d");
  const int oh = s.h / window;
  const int ow = s.w / window;
  PoolResult r{Tensor(Shape{s.n, s.c, oh, ow}), {}};
  if (mode == PoolMode::max) r.argmax.resize(r.output.size());
  const double inv_area = 1.0 / (window * window);

  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = input.offset(n, c, 0, 0);
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          double best = 0.0;
          double sum = 0.0;
          std::size_t best_at = 0;
          bool first = true;
          for (int dy = 0; dy < window; ++dy) {
            for (int dx = 0; dx < window; ++dx) {
              const std::size_t at = base +
                                     static_cast<std::size_t>(oy * window + dy) * s.w +
                                     ox * window + dx;
              const double v = input[at];
              sum += v;
              if (first || v > best) {
                best = v;
                best_at = at;
                first = false;
              }
            }
          }
          if (mode == PoolMode::max) {
            r.output[o] = best;
            r.argmax[o] = best_at;
          } else {
            r.output[o] = sum * inv_area;
          }
        }
      }
    }
  }
  return r;
}

Tensor pool2d_backward(const Tensor& upstream, const Shape& input_shape,
                       int window, PoolMode mode,
                       const std::vector<std::size_t>& argmax) {
  check_pool(input_shape, window, "pool2d_backward");
  require_same_shape(upstream.shape(),
                     Shape{input_shape.n, input_shape.c,
                           input_shape.h / window, input_shape.w / window},
                     "pool2d_backward upstream");
  Tensor grad(input_shape);
  if (mode == PoolMode::max) {
    if (argmax.size() != upstream.size()) {
      throw ShapeError("pool2d_backward: argmax size does not match upstream");
    }
    for (std::size_t i = 0; i < upstream.size(); ++i) {
      grad[argmax[i]] += upstream[i];
    }
    return grad;
  }
  const Shape& u = upstream.shape();
  const double inv_area = 1.0 / (window * window);
  for (int n = 0; n < u.n; ++n) {
    for (int c = 0; c < u.c; ++c) {
      for (int y = 0; y < input_shape.h; ++y) {
        for (int x = 0; x < input_shape.w; ++x) {
          grad.at(n, c, y, x) = upstream.at(n, c, y / window, x / window) *
                                inv_area;
        }
      }
    }
  }
  return grad;
}

Tensor box_filter(const Tensor& input, int window) {
  if (window < 1 || window % 2 == 0) {
    throw ShapeError(fmt::format("box_filter: window {} must be odd", window));
  }
  const Shape& s = input.shape();
  const int r = window / 2;
  const double inv_area = 1.0 / (window * window);
  Tensor out(s);
  std::vector<double> rows(s.plane());
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = input.plane(n, c);
      double* dst = out.plane(n, c);
      // Separable: horizontal sums then vertical sums.
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          double acc = 0.0;
          for (int dx = -r; dx <= r; ++dx) {
            const int xx = x + dx;
            if (xx >= 0 && xx < s.w) acc += src[y * s.w + xx];
          }
          rows[y * s.w + x] = acc;
        }
      }
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          double acc = 0.0;
          for (int dy = -r; dy <= r; ++dy) {
            const int yy = y + dy;
            if (yy >= 0 && yy < s.h) acc += rows[yy * s.w + x];
          }
          dst[y * s.w + x] = acc * inv_area;
        }
      }
    }
  }
  return out;
}

// The zero-padded box filter is self-adjoint.
Tensor box_filter_backward(const Tensor& upstream, int window) {
  return box_filter(upstream, window);
}

Tensor upsample2d(const Tensor& input, int factor) {
  if (factor < 2) {
    throw ShapeError(fmt::format("upsample2d: factor {} < 2", factor));
  }
  const Shape& s = input.shape();
  Tensor out(Shape{s.n, s.c, s.h * factor, s.w * factor});
  const Shape& o = out.shape();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* src = input.plane(n, c);
      double* dst = out.plane(n, c);
      for (int y = 0; y < o.h; ++y) {
        const double* line = src + (y / factor) * s.w;
        for (int x = 0; x < o.w; ++x) dst[y * o.w + x] = line[x / factor];
      }
    }
  }
  return out;
}

Tensor upsample2d_backward(const Tensor& upstream, int factor) {
  if (factor < 2) {
    throw ShapeError(fmt::format("upsample2d_backward: factor {} < 2", factor));
  }
  const Shape& u = upstream.shape();
  if (u.h % factor != 0 || u.w % factor != 0) {
    throw ShapeError(fmt::format(
        "upsample2d_backward: upstream {} not divisible by factor {}",
        to_string(u), factor));
  }
  Tensor grad(Shape{u.n, u.c, u.h / factor, u.w / factor});
  const int gw = u.w / factor;
  for (int n = 0; n < u.n; ++n) {
    for (int c = 0; c < u.c; ++c) {
      const double* src = upstream.plane(n, c);
      double* dst = grad.plane(n, c);
      for (int y = 0; y < u.h; ++y) {
        double* line = dst + (y / factor) * gw;
        for (int x = 0; x < u.w; ++x) line[x / factor] += src[y * u.w + x];
      }
    }
  }
  return grad;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor activation(const Tensor& input, Activation kind) {
  Tensor out(input.shape());
  auto src = input.data();
  auto dst = out.data();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::max(0.0, src[i]);
  } else {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = sigmoid(src[i]);
  }
  return out;
}

Tensor activation_backward(const Tensor& forward_value, const Tensor& upstream,
                           Activation kind) {
  require_same_shape(forward_value.shape(), upstream.shape(),
                     "activation_backward");
  Tensor grad(upstream.shape());
  auto f = forward_value.data();
  auto u = upstream.data();
  auto g = grad.data();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = f[i] > 0.0 ? u[i] : 0.0;
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = u[i] * f[i] * (1.0 - f[i]);
    }
  }
  return grad;
}

Tensor channel_concat(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError(fmt::format("channel_concat: {} and {} disagree outside "
                                 "the channel axis",
                                 to_string(sa), to_string(sb)));
  }
  Tensor out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t na = static_cast<std::size_t>(sa.c) * sa.h * sa.w;
  const std::size_t nb = static_cast<std::size_t>(sb.c) * sb.h * sb.w;
  for (int n = 0; n < sa.n; ++n) {
    double* dst = out.plane(n, 0);
    std::copy_n(a.data().data() + n * na, na, dst);
    std::copy_n(b.data().data() + n * nb, nb, dst + na);
  }
  return out;
}

ConcatGrads channel_concat_backward(const Tensor& upstream, int channels_a) {
  const Shape& u = upstream.shape();
  if (channels_a < 0 || channels_a > u.c) {
    throw ShapeError(fmt::format(
        "channel_concat_backward: cannot split {} at channel {}", to_string(u),
        channels_a));
  }
  ConcatGrads g{Tensor(Shape{u.n, channels_a, u.h, u.w}),
                Tensor(Shape{u.n, u.c - channels_a, u.h, u.w})};
  const std::size_t na = static_cast<std::size_t>(channels_a) * u.h * u.w;
  const std::size_t nb = static_cast<std::size_t>(u.c - channels_a) * u.h * u.w;
  for (int n = 0; n < u.n; ++n) {
    const double* src = upstream.plane(n, 0);
    std::copy_n(src, na, g.a.data().data() + n * na);
    std::copy_n(src + na, nb, g.b.data().data() + n * nb);
  }
  return g;
}

}  // namespace negmine
