#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "negmine/kernels.hpp"
#include "negmine/tensor.hpp"

namespace negmine {

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Shape of the encoder-decoder network.
///
/// Encoder level l (1-based) runs at input_size / 2^(l-1) with
/// base_channels * 2^(l-1) channels and is followed by a 2×2 max-pool. Levels
/// listed in `inception_levels` use an inception block, others two 3×3
/// conv+relu layers. A single 3×3 conv bottleneck sits below the deepest
/// level. Each decoder level upsamples by 2 (nearest neighbour), concatenates
/// the matching encoder output (skip first) and applies one 3×3 conv; the top
/// decoder conv emits the logit map.
struct NetworkSpec {
  int input_size = 64;
  int depth = 3;
  int base_channels = 8;
  std::set<int> inception_levels{2, 3};

  /// Throws SpecError naming the violated constraint.
  void validate() const;
  int channels(int level) const;

  bool operator==(const NetworkSpec&) const = default;
};

struct Layer {
  Tensor weights;  // (out, in, k, k)
  std::vector<double> bias;

  bool operator==(const Layer&) const = default;
};

/// All weights of one network, keyed by layer id. Gradients use the same type.
struct ParameterSet {
  NetworkSpec spec;
  std::map<std::string, Layer> layers;

  const Layer& layer(const std::string& id) const;
  Layer& layer(const std::string& id);
  std::set<std::string> layer_ids() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  bool operator==(const ParameterSet&) const = default;
};

/// Same layers as `like`, all values zero.
ParameterSet zeros_like(const ParameterSet& like);

enum class LayerSection { encoder, bottleneck, decoder };

struct LayerDef {
  std::string id;
  int in_channels;
  int out_channels;
  int kernel;
  int resolution;  // spatial side the layer runs at
  bool relu;       // false only for the logit head
  LayerSection section;
};

/// Every convolution of the network in forward order.
std::vector<LayerDef> layer_plan(const NetworkSpec& spec);

/// He-normal weights for relu layers, Glorot-style for the head, zero biases.
ParameterSet build_network(const NetworkSpec& spec, std::uint64_t seed);

/// Activations kept by forward_train for the backward pass.
struct ForwardCache {
  Tensor input;
  std::map<std::string, Tensor> layer_inputs;
  std::map<std::string, Tensor> layer_outputs;  // post-activation
  std::vector<PoolResult> pools;  // one per encoder level
  std::vector<Shape> pool_inputs;
  Tensor logits;
  Tensor probabilities;
};

/// Probability map of shape (N, 1, input_size, input_size).
Tensor forward(const ParameterSet& params, const Tensor& batch);

ForwardCache forward_train(const ParameterSet& params, const Tensor& batch);

/// Parameter gradients given dLoss/dlogits.
ParameterSet backward(const ParameterSet& params, const ForwardCache& cache,
                      const Tensor& grad_logits);

/// Gradient with respect to the network input as well; used by tests.
ParameterSet backward(const ParameterSet& params, const ForwardCache& cache,
                      const Tensor& grad_logits, Tensor* grad_input);

// ------------------------------------------------------------ cost model

std::uint64_t conv_macs(int in_channels, int out_channels, int kernel,
                        int height, int width);

struct MacBreakdown {
  std::uint64_t encoder = 0;
  std::uint64_t bottleneck = 0;
  std::uint64_t decoder = 0;
  std::uint64_t total() const { return encoder + bottleneck + decoder; }
};

/// Multiply-accumulates of one forward pass on one image. With
/// use_inception=false every encoder level is the plain double-conv block.
/// Pool-branch mean filters count window² MACs per output element.
MacBreakdown count_mac_breakdown(const NetworkSpec& spec, bool use_inception);
std::uint64_t count_macs(const NetworkSpec& spec, bool use_inception);

}  // namespace negmine
