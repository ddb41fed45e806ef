#include "negmine/network.hpp"

#include <cmath>

#include <fmt/core.h>

#include "negmine/random.hpp"

namespace negmine {
namespace {

constexpr const char* kBottleneck = "bottleneck.conv";
constexpr const char* kHead = "head";

std::string enc_id(int level, std::string_view leaf) {
  return fmt::format("enc{}.{}", level, leaf);
}

std::string dec_id(int level) {
  return level == 1 ? std::string(kHead) : fmt::format("dec{}.conv", level);
}

struct InceptionWidths {
  int branch1x1, branch3x3, branch5x5, branch_pool;
};

// Output channels split evenly; the remainder goes to the 3×3 branch. Each
// reduce layer is as wide as the branch it feeds.
InceptionWidths inception_widths(int out_channels) {
  const int q = out_channels / 4;
  return {q, q + out_channels % 4, q, q};
}

void require_input(const NetworkSpec& spec, const Tensor& batch) {
  const Shape& s = batch.shape();
  if (s.c != 1 || s.h != spec.input_size || s.w != spec.input_size) {
    throw ShapeError(fmt::format(
        "forward: batch {} does not match network input [N, 1, {}, {}]",
        to_string(s), spec.input_size, spec.input_size));
  }
}

class Runner {
 public:
  Runner(const ParameterSet& params, ForwardCache* cache)
      : params_(params), cache_(cache) {}

  Tensor conv(const std::string& id, const Tensor& x, bool relu) {
    const Layer& layer = params_.layer(id);
    const int pad = layer.weights.shape().h / 2;
    Tensor y = conv2d(x, layer.weights, layer.bias, 1, pad);
    if (relu) {
      for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
    }
    if (cache_ != nullptr) {
      cache_->layer_inputs[id] = x;
      cache_->layer_outputs[id] = y;
    }
    return y;
  }

  Tensor block(int level, const Tensor& x) {
    const NetworkSpec& spec = params_.spec;
    if (!spec.inception_levels.contains(level)) {
      return conv(enc_id(level, "conv_b"), conv(enc_id(level, "conv_a"), x, true),
                  true);
    }
    const Tensor b1 = conv(enc_id(level, "inception.branch1x1"), x, true);
    const Tensor b3 = conv(enc_id(level, "inception.branch3x3"),
                           conv(enc_id(level, "inception.reduce3x3"), x, true), true);
    const Tensor b5 = conv(enc_id(level, "inception.branch5x5"),
                           conv(enc_id(level, "inception.reduce5x5"), x, true), true);
    const Tensor smoothed = box_filter(x, 3);
    const Tensor bp = conv(enc_id(level, "inception.branch_pool"), smoothed, true);
    return channel_concat(channel_concat(channel_concat(b1, b3), b5), bp);
  }

  Tensor run(const Tensor& batch) {
    const NetworkSpec& spec = params_.spec;
    require_input(spec, batch);
    if (cache_ != nullptr) cache_->input = batch;

    std::vector<Tensor> skips;
    Tensor x = batch;
    for (int level = 1; level <= spec.depth; ++level) {
      skips.push_back(block(level, x));
      PoolResult pooled = pool2d(skips.back(), 2, PoolMode::max);
      x = std::move(pooled.output);
      if (cache_ != nullptr) {
        cache_->pool_inputs.push_back(skips.back().shape());
        pooled.output = Tensor();
        cache_->pools.push_back(std::move(pooled));
      }
    }
    Tensor d = conv(kBottleneck, x, true);
    for (int level = spec.depth; level >= 1; --level) {
      const Tensor merged = channel_concat(skips[level - 1], upsample2d(d, 2));
      d = conv(dec_id(level), merged, level > 1);
    }
    return d;
  }

 private:
  const ParameterSet& params_;
  ForwardCache* cache_;
};

class BackRunner {
 public:
  BackRunner(const ParameterSet& params, const ForwardCache& cache,
             ParameterSet& grads)
      : params_(params), cache_(cache), grads_(grads) {}

  Tensor conv(const std::string& id, const Tensor& upstream, bool want_input) {
    const Layer& layer = params_.layer(id);
    const int pad = layer.weights.shape().h / 2;
    const Tensor& out = cache_.layer_outputs.at(id);
    const Tensor pre_grad = id == kHead
                                ? upstream
                                : activation_backward(out, upstream, Activation::relu);
    ConvGrads g = conv2d_backward(cache_.layer_inputs.at(id), layer.weights,
                                  pre_grad, 1, pad, want_input);
    Layer& dst = grads_.layer(id);
    dst.weights = std::move(g.kernels);
    dst.bias = std::move(g.bias);
    return std::move(g.input);
  }

  static void accumulate(Tensor& into, const Tensor& g) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
  }

  Tensor block(int level, const Tensor& upstream, bool want_input) {
    const NetworkSpec& spec = params_.spec;
    if (!spec.inception_levels.contains(level)) {
      const Tensor g = conv(enc_id(level, "conv_b"), upstream, true);
      return conv(enc_id(level, "conv_a"), g, want_input);
    }
    const InceptionWidths w = inception_widths(spec.channels(level));
    ConcatGrads s1 = channel_concat_backward(upstream, w.branch1x1);
    ConcatGrads s3 = channel_concat_backward(s1.b, w.branch3x3);
    ConcatGrads s5 = channel_concat_backward(s3.b, w.branch5x5);

    Tensor gx = conv(enc_id(level, "inception.branch1x1"), s1.a, want_input);
    Tensor g3 = conv(enc_id(level, "inception.branch3x3"), s3.a, true);
    Tensor gr3 = conv(enc_id(level, "inception.reduce3x3"), g3, want_input);
    Tensor g5 = conv(enc_id(level, "inception.branch5x5"), s5.a, true);
    Tensor gr5 = conv(enc_id(level, "inception.reduce5x5"), g5, want_input);
    Tensor gbox = conv(enc_id(level, "inception.branch_pool"), s5.b, want_input);
    if (!want_input) return Tensor();
    accumulate(gx, gr3);
    accumulate(gx, gr5);
    accumulate(gx, box_filter_backward(gbox, 3));
    return gx;
  }

  Tensor run(const Tensor& grad_logits, bool want_input) {
    const NetworkSpec& spec = params_.spec;
    std::vector<Tensor> skip_grads(spec.depth);
    Tensor g = grad_logits;
    for (int level = 1; level <= spec.depth; ++level) {
      const Tensor merged = conv(dec_id(level), g, true);
      ConcatGrads split = channel_concat_backward(merged, spec.channels(level));
      skip_grads[level - 1] = std::move(split.a);
      g = upsample2d_backward(split.b, 2);
    }
    g = conv(kBottleneck, g, true);
    for (int level = spec.depth; level >= 1; --level) {
      Tensor ge = pool2d_backward(g, cache_.pool_inputs[level - 1], 2, PoolMode::max,
                                  cache_.pools[level - 1].argmax);
      accumulate(ge, skip_grads[level - 1]);
      g = block(level, ge, level > 1 || want_input);
    }
    return g;
  }

 private:
  const ParameterSet& params_;
  const ForwardCache& cache_;
  ParameterSet& grads_;
};

}  // namespace

void NetworkSpec::validate() const {
  if (depth < 2) {
    throw SpecError(fmt::format("depth must be >= 2 (got {})", depth));
  }
  if (depth > 16) {
    throw SpecError(fmt::format("depth must be <= 16 (got {})", depth));
  }
  if (base_channels < 4) {
    throw SpecError(
        fmt::format("base_channels must be >= 4 (got {})", base_channels));
  }
  if (input_size <= 0 || input_size % (1 << depth) != 0) {
    throw SpecError(fmt::format("input_size {} must be divisible by 2^depth = {}",
                                input_size, 1 << depth));
  }
  for (int level : inception_levels) {
    if (level < 1 || level > depth) {
      throw SpecError(fmt::format("inception level {} outside encoder levels 1..{}",
                                  level, depth));
    }
  }
}

int NetworkSpec::channels(int level) const {
  return base_channels << (level - 1);
}

const Layer& ParameterSet::layer(const std::string& id) const {
  auto it = layers.find(id);
  if (it == layers.end()) throw std::out_of_range("no layer '" + id + "'");
  return it->second;
}

Layer& ParameterSet::layer(const std::string& id) {
  auto it = layers.find(id);
  if (it == layers.end()) throw std::out_of_range("no layer '" + id + "'");
  return it->second;
}

std::set<std::string> ParameterSet::layer_ids() const {
  std::set<std::string> ids;
  for (const auto& [id, _] : layers) ids.insert(id);
  return ids;
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, l] : layers) n += l.weights.size() + l.bias.size();
  return n;
}

bool ParameterSet::all_finite() const {
  for (const auto& [_, l] : layers) {
    if (!l.weights.all_finite()) return false;
    for (double b : l.bias) {
      if (!std::isfinite(b)) return false;
    }
  }
  return true;
}

ParameterSet zeros_like(const ParameterSet& like) {
  ParameterSet z;
  z.spec = like.spec;
  for (const auto& [id, l] : like.layers) {
    z.layers[id] = Layer{Tensor(l.weights.shape()),
                         std::vector<double>(l.bias.size(), 0.0)};
  }
  return z;
}

std::vector<LayerDef> layer_plan(const NetworkSpec& spec) {
  spec.validate();
  std::vector<LayerDef> plan;
  int in = 1;
  int size = spec.input_size;
  for (int level = 1; level <= spec.depth; ++level) {
    const int out = spec.channels(level);
    auto add = [&](std::string_view leaf, int cin, int cout, int k) {
      plan.push_back({enc_id(level, leaf), cin, cout, k, size, true,
                      LayerSection::encoder});
    };
    if (spec.inception_levels.contains(level)) {
      const InceptionWidths w = inception_widths(out);
      add("inception.branch1x1", in, w.branch1x1, 1);
      add("inception.reduce3x3", in, w.branch3x3, 1);
      add("inception.branch3x3", w.branch3x3, w.branch3x3, 3);
      add("inception.reduce5x5", in, w.branch5x5, 1);
      add("inception.branch5x5", w.branch5x5, w.branch5x5, 5);
      add("inception.branch_pool", in, w.branch_pool, 1);
    } else {
      add("conv_a", in, out, 3);
      add("conv_b", out, out, 3);
    }
    in = out;
    size /= 2;
  }
  const int deepest = spec.channels(spec.depth);
  plan.push_back({kBottleneck, deepest, deepest, 3, size, true,
                  LayerSection::bottleneck});
  int below = deepest;
  for (int level = spec.depth; level >= 1; --level) {
    size *= 2;
    const int out = level > 1 ? spec.channels(level - 1) : 1;
    plan.push_back({dec_id(level), spec.channels(level) + below, out, 3, size,
                    level > 1, LayerSection::decoder});
    below = out;
  }
  return plan;
}

ParameterSet build_network(const NetworkSpec& spec, std::uint64_t seed) {
  const auto plan = layer_plan(spec);
  auto rng = substream(seed, "init");
  ParameterSet params;
  params.spec = spec;
  for (const LayerDef& def : plan) {
    const int fan_in = def.in_channels * def.kernel * def.kernel;
    const double scale = std::sqrt((def.relu ? 2.0 : 1.0) / fan_in);
    Tensor w(Shape{def.out_channels, def.in_channels, def.kernel, def.kernel});
    for (double& v : w.values()) v = scale * standard_normal(rng);
    params.layers[def.id] =
        Layer{std::move(w), std::vector<double>(def.out_channels, 0.0)};
  }
  return params;
}

Tensor forward(const ParameterSet& params, const Tensor& batch) {
  Tensor logits = Runner(params, nullptr).run(batch);
  return activation(logits, Activation::sigmoid);
}

ForwardCache forward_train(const ParameterSet& params, const Tensor& batch) {
  ForwardCache cache;
  cache.logits = Runner(params, &cache).run(batch);
  cache.probabilities = activation(cache.logits, Activation::sigmoid);
  return cache;
}

ParameterSet backward(const ParameterSet& params, const ForwardCache& cache,
                      const Tensor& grad_logits) {
  return backward(params, cache, grad_logits, nullptr);
}

ParameterSet backward(const ParameterSet& params, const ForwardCache& cache,
                      const Tensor& grad_logits, Tensor* grad_input) {
  require_same_shape(grad_logits.shape(), cache.logits.shape(),
                     "backward grad_logits");
  ParameterSet grads = zeros_like(params);
  Tensor gx = BackRunner(params, cache, grads).run(grad_logits, grad_input != nullptr);
  if (grad_input != nullptr) *grad_input = std::move(gx);
  return grads;
}

std::uint64_t conv_macs(int in_channels, int out_channels, int kernel,
                        int height, int width) {
  return static_cast<std::uint64_t>(in_channels) * out_channels * kernel * kernel *
         height * width;
}

MacBreakdown count_mac_breakdown(const NetworkSpec& spec, bool use_inception) {
  NetworkSpec s = spec;
  if (!use_inception) s.inception_levels.clear();
  MacBreakdown m;
  for (const LayerDef& def : layer_plan(s)) {
    std::uint64_t macs = conv_macs(def.in_channels, def.out_channels, def.kernel,
                                   def.resolution, def.resolution);
    if (def.id.ends_with("inception.branch_pool")) {
      macs += conv_macs(def.in_channels, 1, 3, def.resolution, def.resolution);
    }
    switch (def.section) {
      case LayerSection::encoder: m.encoder += macs; break;
      case LayerSection::bottleneck: m.bottleneck += macs; break;
      case LayerSection::decoder: m.decoder += macs; break;
    }
  }
  return m;
}

std::uint64_t count_macs(const NetworkSpec& spec, bool use_inception) {
  return count_mac_breakdown(spec, use_inception).total();
}

}  // namespace negmine
