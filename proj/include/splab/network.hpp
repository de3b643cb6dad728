#pragma once

#include <cstdint>
#include <vector>

#include "splab/rng.hpp"
#include "splab/tensor.hpp"

namespace splab {

enum class LayerKind : std::uint8_t { dense = 0, conv = 1 };

/// One affine layer. Dense layers read a flat vector of length in_ch (with
/// in_h = in_w = ksize = 1); conv layers read in_ch x in_h x in_w with a
/// ksize x ksize kernel, stride 1 and no padding.
struct Layer {
  LayerKind kind = LayerKind::dense;
  std::size_t in_ch = 0;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_ch = 0;
  std::size_t ksize = 1;
  Vec weight;  // dense: out x in; conv: out x in_ch x k x k
  Vec bias;    // out_ch

  static Layer dense(std::size_t in, std::size_t out);
  static Layer conv(std::size_t in_ch, std::size_t in_h, std::size_t in_w, std::size_t out_ch,
                    std::size_t ksize = 3);

  std::size_t out_h() const { return kind == LayerKind::conv ? in_h - ksize + 1 : 1; }
  std::size_t out_w() const { return kind == LayerKind::conv ? in_w - ksize + 1 : 1; }
  std::size_t spatial() const { return out_h() * out_w(); }
  std::size_t input_size() const { return in_ch * in_h * in_w; }
  std::size_t output_size() const { return out_ch * spatial(); }
  /// Incoming weights per output node (excluding the bias).
  std::size_t fan_in() const { return in_ch * ksize * ksize; }

  double& w(std::size_t o, std::size_t i) { return weight[o * fan_in() + i]; }
  double w(std::size_t o, std::size_t i) const { return weight[o * fan_in() + i]; }
};

/// Plain ReLU network: ReLU after every layer but the last, which emits
/// linear logits. A dense layer following a conv layer reads its output
/// flattened channel-major.
struct Network {
  std::vector<std::size_t> input_shape;
  std::vector<Layer> layers;
  bool biases = true;

  std::size_t input_size() const { return shape_product(input_shape); }
  std::size_t output_dim() const { return layers.back().out_ch; }
  std::size_t hidden_layers() const { return layers.size() - 1; }
  std::size_t parameter_count() const;
  /// Throws ShapeError unless consecutive layers chain.
  void validate() const;
};

/// Dense ReLU net input_dim -> hidden... -> outputs.
Network make_dense_net(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                       std::size_t outputs, bool biases, Rng& rng);
/// Conv stack (kernel ksize) -> flatten -> one dense layer to `classes`.
Network make_conv_net(std::size_t channels, std::size_t height, std::size_t width,
                      const std::vector<std::size_t>& conv_channels, std::size_t classes,
                      bool biases, Rng& rng, std::size_t ksize = 3);
/// Uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)); biases zero.
void init_glorot_uniform(Network& net, Rng& rng);

struct ForwardResult {
  Vec logits;
  bool recorded = false;
  Vec input;
  /// Post-activation output of every layer (the last is the logits).
  std::vector<Vec> activations;
  /// ReLU gates per hidden layer: 1 where the pre-activation is > 0.
  std::vector<std::vector<std::uint8_t>> gates;
};

ForwardResult forward(const Network& net, std::span<const double> x, bool record);
inline Vec logits(const Network& net, std::span<const double> x) { return forward(net, x, false).logits; }

/// Parameter-shaped gradient container.
struct Gradients {
  std::vector<Vec> weight;
  std::vector<Vec> bias;

  static Gradients zeros_like(const Network& net);
  void add(const Gradients& other, double scale = 1.0);
  void scale(double s);
  Vec flatten() const;
};

struct BackwardResult {
  Gradients params;
  Vec input_grad;
  /// Gradient at the first hidden layer's pre-activations.
  Vec g1;
};

struct BackwardOptions {
  bool params = true;
  bool input = true;
};

/// Exact reverse pass for the scalar loss whose gradient at the logits is
/// `loss_grad`. Requires a recorded forward on the same network.
BackwardResult backward(const Network& net, const ForwardResult& fwd, std::span<const double> loss_grad,
                        BackwardOptions opts = {});
/// Same, starting from a gradient at the post-activation output of `layer`.
BackwardResult backward_from(const Network& net, const ForwardResult& fwd, std::size_t layer,
                             std::span<const double> grad_at_output, BackwardOptions opts = {});

/// Incoming weight of node j in augmented form [kernel; bias].
Vec node_weight(const Network& net, std::size_t layer, std::size_t j);
/// Incoming weight of node j without the bias component.
Vec node_kernel(const Network& net, std::size_t layer, std::size_t j);
/// Next-layer weights reading node j, flattened (output-node major).
Vec node_fanout(const Network& net, std::size_t layer, std::size_t j);
/// Overwrites the fan-out returned by node_fanout with `values`.
void set_node_fanout(Network& net, std::size_t layer, std::size_t j, std::span<const double> values);

struct PruneResult {
  Network net;
  std::vector<std::size_t> kept_per_layer;
  std::vector<std::size_t> removed_per_layer;
  /// Max |logit difference| between original and pruned nets on the batch.
  double logit_delta = 0.0;
};

/// Removes hidden nodes whose fan-out l2 norm is below threshold_ratio times
/// the largest fan-out norm in the same layer. Nodes with zero fan-out are
/// always removed.
PruneResult prune_inactive(const Network& net, double threshold_ratio,
                           const std::vector<Vec>& heldout);

/// Keeps only `keep` (sorted) nodes of hidden layer `layer`.
Network remove_nodes(const Network& net, std::size_t layer, const std::vector<std::size_t>& keep);

/// SGD update: params -= lr * grads. Bias gradients are ignored when the
/// network has biases disabled.
void sgd_update(Network& net, const Gradients& grads, double lr);

/// Flat view of all parameters in layer order (weights then bias per layer).
Vec flatten_params(const Network& net);
void unflatten_params(Network& net, std::span<const double> flat);

}  // namespace splab
