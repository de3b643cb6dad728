#include "splab/network.hpp"

#include <algorithm>
#include <cmath>

namespace splab {

Layer Layer::dense(std::size_t in, std::size_t out) {
  Layer l;
  l.kind = LayerKind::dense;
  l.in_ch = in;
  l.out_ch = out;
  l.weight.assign(in * out, 0.0);
  l.bias.assign(out, 0.0);
  return l;
}

Layer Layer::conv(std::size_t in_ch, std::size_t in_h, std::size_t in_w, std::size_t out_ch,
                  std::size_t ksize) {
  if (ksize == 0 || ksize > in_h || ksize > in_w) throw ShapeError("conv: kernel larger than input");
  Layer l;
  l.kind = LayerKind::conv;
  l.in_ch = in_ch;
  l.in_h = in_h;
  l.in_w = in_w;
  l.out_ch = out_ch;
  l.ksize = ksize;
  l.weight.assign(out_ch * in_ch * ksize * ksize, 0.0);
  l.bias.assign(out_ch, 0.0);
  return l;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void Network::validate() const {
  if (layers.empty()) throw ShapeError("network has no layers");
  if (layers.front().input_size() != input_size())
    throw ShapeError("first layer input size does not match input shape " + shape_string(input_shape));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    if (L.in_ch == 0 || L.out_ch == 0) throw ShapeError("layer " + std::to_string(l) + " has an empty dimension");
    if (L.weight.size() != L.out_ch * L.fan_in() || L.bias.size() != L.out_ch)
      throw ShapeError("layer " + std::to_string(l) + " parameter arrays have the wrong size");
    if (l + 1 < layers.size() && layers[l + 1].input_size() != L.output_size())
      throw ShapeError("layer " + std::to_string(l) + " output does not chain into layer " + std::to_string(l + 1));
    if (l + 1 < layers.size() && layers[l + 1].kind == LayerKind::conv) {
      const auto& N = layers[l + 1];
      if (L.kind != LayerKind::conv || N.in_ch != L.out_ch || N.in_h != L.out_h() || N.in_w != L.out_w())
        throw ShapeError("conv layer " + std::to_string(l + 1) + " does not follow a matching conv layer");
    }
  }
}

void init_glorot_uniform(Network& net, Rng& rng) {
  for (auto& L : net.layers) {
    const double fan_in = static_cast<double>(L.fan_in());
    const double fan_out = static_cast<double>(L.out_ch * L.ksize * L.ksize);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : L.weight) w = rng.uniform(-a, a);
    std::fill(L.bias.begin(), L.bias.end(), 0.0);
  }
}

Network make_dense_net(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                       std::size_t outputs, bool biases, Rng& rng) {
  Network net;
  net.input_shape = {input_dim};
  net.biases = biases;
  std::size_t in = input_dim;
  for (auto h : hidden) {
    net.layers.push_back(Layer::dense(in, h));
    in = h;
  }
  net.layers.push_back(Layer::dense(in, outputs));
  net.validate();
  init_glorot_uniform(net, rng);
  return net;
}

Network make_conv_net(std::size_t channels, std::size_t height, std::size_t width,
                      const std::vector<std::size_t>& conv_channels, std::size_t classes,
                      bool biases, Rng& rng, std::size_t ksize) {
  Network net;
  net.input_shape = {channels, height, width};
  net.biases = biases;
  std::size_t c = channels, h = height, w = width;
  for (auto oc : conv_channels) {
    net.layers.push_back(Layer::conv(c, h, w, oc, ksize));
    c = oc;
    h = h - ksize + 1;
    w = w - ksize + 1;
  }
  net.layers.push_back(Layer::dense(c * h * w, classes));
  net.validate();
  init_glorot_uniform(net, rng);
  return net;
}

namespace {

void layer_forward(const Layer& L, std::span<const double> in, Vec& out) {
  out.assign(L.output_size(), 0.0);
  if (L.kind == LayerKind::dense) {
    const std::size_t n = L.in_ch;
    for (std::size_t o = 0; o < L.out_ch; ++o) {
      const double* wr = L.weight.data() + o * n;
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += wr[i] * in[i];
      out[o] = s + L.bias[o];
    }
    return;
  }
  const std::size_t k = L.ksize, oh = L.out_h(), ow = L.out_w(), W = L.in_w, H = L.in_h;
  for (std::size_t o = 0; o < L.out_ch; ++o) {
    double* op = out.data() + o * oh * ow;
    std::fill(op, op + oh * ow, L.bias[o]);
    for (std::size_t c = 0; c < L.in_ch; ++c) {
      const double* ip = in.data() + c * H * W;
      const double* wp = L.weight.data() + (o * L.in_ch + c) * k * k;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = wp[ky * k + kx];
          for (std::size_t y = 0; y < oh; ++y) {
            const double* irow = ip + (y + ky) * W + kx;
            double* orow = op + y * ow;
            for (std::size_t x = 0; x < ow; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

// grad_out: gradient at this layer's pre-activation. Accumulates parameter
// gradients into gw/gb and writes the input gradient into grad_in.
void layer_backward(const Layer& L, std::span<const double> in, std::span<const double> grad_out,
                    Vec* gw, Vec* gb, Vec* grad_in) {
  if (grad_in) grad_in->assign(L.input_size(), 0.0);
  if (L.kind == LayerKind::dense) {
    const std::size_t n = L.in_ch;
    for (std::size_t o = 0; o < L.out_ch; ++o) {
      const double g = grad_out[o];
      if (g == 0.0) continue;
      if (gw) {
        double* gwr = gw->data() + o * n;
        for (std::size_t i = 0; i < n; ++i) gwr[i] += g * in[i];
      }
      if (gb) (*gb)[o] += g;
      if (grad_in) {
        const double* wr = L.weight.data() + o * n;
        double* gi = grad_in->data();
        for (std::size_t i = 0; i < n; ++i) gi[i] += g * wr[i];
      }
    }
    return;
  }
  const std::size_t k = L.ksize, oh = L.out_h(), ow = L.out_w(), W = L.in_w, H = L.in_h;
  for (std::size_t o = 0; o < L.out_ch; ++o) {
    const double* gp = grad_out.data() + o * oh * ow;
    if (gb) {
      double s = 0.0;
      for (std::size_t i = 0; i < oh * ow; ++i) s += gp[i];
      (*gb)[o] += s;
    }
    for (std::size_t c = 0; c < L.in_ch; ++c) {
      const double* ip = in.data() + c * H * W;
      const std::size_t wbase = (o * L.in_ch + c) * k * k;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          const double wv = L.weight[wbase + ky * k + kx];
          double acc = 0.0;
          for (std::size_t y = 0; y < oh; ++y) {
            const double* irow = ip + (y + ky) * W + kx;
            const double* grow = gp + y * ow;
            if (gw)
              for (std::size_t x = 0; x < ow; ++x) acc += grow[x] * irow[x];
            if (grad_in) {
              double* girow = grad_in->data() + c * H * W + (y + ky) * W + kx;
              for (std::size_t x = 0; x < ow; ++x) girow[x] += wv * grow[x];
            }
          }
          if (gw) (*gw)[wbase + ky * k + kx] += acc;
        }
      }
    }
  }
}

}  // namespace

ForwardResult forward(const Network& net, std::span<const double> x, bool record) {
  if (x.size() != net.input_size())
    throw ShapeError("forward: input length " + std::to_string(x.size()) + " does not match input shape " +
                     shape_string(net.input_shape));
  ForwardResult res;
  res.recorded = record;
  if (record) {
    res.input.assign(x.begin(), x.end());
    res.activations.resize(net.layers.size());
    res.gates.resize(net.hidden_layers());
  }
  Vec cur(x.begin(), x.end());
  Vec next;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    layer_forward(net.layers[l], cur, next);
    if (l + 1 < net.layers.size()) {
      if (record) res.gates[l].resize(next.size());
      for (std::size_t i = 0; i < next.size(); ++i) {
        const bool on = next[i] > 0.0;
        if (!on) next[i] = 0.0;
        if (record) res.gates[l][i] = on ? 1 : 0;
      }
    }
    if (record) res.activations[l] = next;
    std::swap(cur, next);
  }
  res.logits = std::move(cur);
  return res;
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (const auto& L : net.layers) {
    g.weight.emplace_back(L.weight.size(), 0.0);
    g.bias.emplace_back(L.bias.size(), 0.0);
  }
  return g;
}

void Gradients::add(const Gradients& other, double s) {
  for (std::size_t l = 0; l < weight.size(); ++l) {
    axpy(s, other.weight[l], weight[l]);
    axpy(s, other.bias[l], bias[l]);
  }
}

void Gradients::scale(double s) {
  for (auto& w : weight)
    for (double& v : w) v *= s;
  for (auto& b : bias)
    for (double& v : b) v *= s;
}

Vec Gradients::flatten() const {
  Vec out;
  for (std::size_t l = 0; l < weight.size(); ++l) {
    out.insert(out.end(), weight[l].begin(), weight[l].end());
    out.insert(out.end(), bias[l].begin(), bias[l].end());
  }
  return out;
}

BackwardResult backward_from(const Network& net, const ForwardResult& fwd, std::size_t layer,
                             std::span<const double> grad_at_output, BackwardOptions opts) {
  if (!fwd.recorded) throw Error("backward: forward pass was not recorded");
  if (layer >= net.layers.size()) throw ShapeError("backward: layer index out of range");
  if (grad_at_output.size() != net.layers[layer].output_size())
    throw ShapeError("backward: gradient length does not match layer output");
  if (fwd.activations.size() != net.layers.size() || fwd.input.size() != net.input_size())
    throw ShapeError("backward: recorded forward does not belong to this network");

  BackwardResult res;
  if (opts.params) res.params = Gradients::zeros_like(net);

  Vec grad(grad_at_output.begin(), grad_at_output.end());
  Vec grad_in;
  for (std::size_t l = layer + 1; l-- > 0;) {
    if (l + 1 < net.layers.size()) {
      const auto& gate = fwd.gates[l];
      for (std::size_t i = 0; i < grad.size(); ++i)
        if (!gate[i]) grad[i] = 0.0;
    }
    if (l == 0) res.g1 = grad;
    const std::span<const double> in = l == 0 ? std::span<const double>(fwd.input)
                                              : std::span<const double>(fwd.activations[l - 1]);
    const bool need_input = l > 0 || opts.input;
    layer_backward(net.layers[l], in, grad, opts.params ? &res.params.weight[l] : nullptr,
                   opts.params && net.biases ? &res.params.bias[l] : nullptr,
                   need_input ? &grad_in : nullptr);
    if (need_input) std::swap(grad, grad_in);
  }
  if (opts.input) res.input_grad = std::move(grad);
  return res;
}

BackwardResult backward(const Network& net, const ForwardResult& fwd, std::span<const double> loss_grad,
                        BackwardOptions opts) {
  return backward_from(net, fwd, net.layers.size() - 1, loss_grad, opts);
}

Vec node_kernel(const Network& net, std::size_t layer, std::size_t j) {
  if (layer >= net.layers.size() || j >= net.layers[layer].out_ch) throw ShapeError("node index out of range");
  const auto& L = net.layers[layer];
  const std::size_t n = L.fan_in();
  return Vec(L.weight.begin() + j * n, L.weight.begin() + (j + 1) * n);
}

Vec node_weight(const Network& net, std::size_t layer, std::size_t j) {
  Vec w = node_kernel(net, layer, j);
  w.push_back(net.layers[layer].bias[j]);
  return w;
}

namespace {

// Visits every next-layer weight reading node j, in output-node-major order.
template <typename Net, typename F>
void for_each_fanout(Net& net, std::size_t layer, std::size_t j, F&& f) {
  if (layer >= net.layers.size() || j >= net.layers[layer].out_ch) throw ShapeError("node index out of range");
  if (layer + 1 >= net.layers.size()) throw ShapeError("output layer nodes have no fan-out");
  const auto& L = net.layers[layer];
  auto& N = net.layers[layer + 1];
  if (N.kind == LayerKind::conv) {
    const std::size_t kk = N.ksize * N.ksize;
    for (std::size_t o = 0; o < N.out_ch; ++o)
      for (std::size_t t = 0; t < kk; ++t) f(N.weight[(o * N.in_ch + j) * kk + t]);
    return;
  }
  const std::size_t sp = L.spatial();
  for (std::size_t o = 0; o < N.out_ch; ++o)
    for (std::size_t t = 0; t < sp; ++t) f(N.weight[o * N.in_ch + j * sp + t]);
}

}  // namespace

Vec node_fanout(const Network& net, std::size_t layer, std::size_t j) {
  Vec out;
  for_each_fanout(net, layer, j, [&](const double& w) { out.push_back(w); });
  return out;
}

void set_node_fanout(Network& net, std::size_t layer, std::size_t j, std::span<const double> values) {
  std::size_t i = 0;
  for_each_fanout(net, layer, j, [&](double& w) {
    if (i >= values.size()) throw ShapeError("set_node_fanout: too few values");
    w = values[i++];
  });
  if (i != values.size()) throw ShapeError("set_node_fanout: too many values");
}

Network remove_nodes(const Network& net, std::size_t layer, const std::vector<std::size_t>& keep) {
  if (layer + 1 >= net.layers.size()) throw ShapeError("remove_nodes: only hidden layers can be pruned");
  if (keep.empty()) throw Error("pruning would empty layer " + std::to_string(layer));
  Network out = net;
  const Layer& L = net.layers[layer];
  Layer& NL = out.layers[layer];
  const std::size_t n = L.fan_in();
  NL.out_ch = keep.size();
  NL.weight.clear();
  NL.bias.clear();
  for (auto j : keep) {
    NL.weight.insert(NL.weight.end(), L.weight.begin() + j * n, L.weight.begin() + (j + 1) * n);
    NL.bias.push_back(L.bias[j]);
  }

  const Layer& N = net.layers[layer + 1];
  Layer& NN = out.layers[layer + 1];
  if (N.kind == LayerKind::conv) {
    const std::size_t kk = N.ksize * N.ksize;
    NN.in_ch = keep.size();
    NN.weight.clear();
    for (std::size_t o = 0; o < N.out_ch; ++o)
      for (auto j : keep)
        NN.weight.insert(NN.weight.end(), N.weight.begin() + (o * N.in_ch + j) * kk,
                         N.weight.begin() + (o * N.in_ch + j + 1) * kk);
  } else {
    const std::size_t sp = L.spatial();
    NN.in_ch = keep.size() * sp;
    NN.weight.clear();
    for (std::size_t o = 0; o < N.out_ch; ++o)
      for (auto j : keep)
        NN.weight.insert(NN.weight.end(), N.weight.begin() + o * N.in_ch + j * sp,
                         N.weight.begin() + o * N.in_ch + (j + 1) * sp);
  }
  out.validate();
  return out;
}

PruneResult prune_inactive(const Network& net, double threshold_ratio, const std::vector<Vec>& heldout) {
  if (threshold_ratio < 0.0) throw Error("prune_inactive: negative threshold ratio");
  std::vector<std::vector<std::size_t>> keep(net.hidden_layers());
  for (std::size_t l = 0; l < net.hidden_layers(); ++l) {
    Vec norms(net.layers[l].out_ch);
    for (std::size_t j = 0; j < norms.size(); ++j) norms[j] = norm2(node_fanout(net, l, j));
    const double cut = threshold_ratio * *std::max_element(norms.begin(), norms.end());
    for (std::size_t j = 0; j < norms.size(); ++j)
      if (norms[j] > cut || (cut > 0.0 && norms[j] == cut)) keep[l].push_back(j);
    if (keep[l].empty()) throw Error("pruning would empty layer " + std::to_string(l));
  }

  PruneResult res{net, {}, {}, 0.0};
  for (std::size_t l = 0; l < net.hidden_layers(); ++l) {
    if (keep[l].size() != net.layers[l].out_ch) res.net = remove_nodes(res.net, l, keep[l]);
    res.kept_per_layer.push_back(keep[l].size());
    res.removed_per_layer.push_back(net.layers[l].out_ch - keep[l].size());
  }
  for (const auto& x : heldout) {
    const Vec a = logits(net, x);
    const Vec b = logits(res.net, x);
    for (std::size_t i = 0; i < a.size(); ++i) res.logit_delta = std::max(res.logit_delta, std::abs(a[i] - b[i]));
  }
  return res;
}

void sgd_update(Network& net, const Gradients& grads, double lr) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    axpy(-lr, grads.weight[l], net.layers[l].weight);
    if (net.biases) axpy(-lr, grads.bias[l], net.layers[l].bias);
  }
}

Vec flatten_params(const Network& net) {
  Vec out;
  out.reserve(net.parameter_count());
  for (const auto& L : net.layers) {
    out.insert(out.end(), L.weight.begin(), L.weight.end());
    out.insert(out.end(), L.bias.begin(), L.bias.end());
  }
  return out;
}

void unflatten_params(Network& net, std::span<const double> flat) {
  if (flat.size() != net.parameter_count()) throw ShapeError("unflatten_params: wrong length");
  std::size_t i = 0;
  for (auto& L : net.layers) {
    for (double& w : L.weight) w = flat[i++];
    for (double& b : L.bias) b = flat[i++];
  }
}

}  // namespace splab
