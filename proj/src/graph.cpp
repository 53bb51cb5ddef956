#include "pfm/graph.hpp"

#include <algorithm>
#include <string>

#include "pfm/errors.hpp"
#include "pfm/kernels.hpp"

namespace pfm {

namespace {

kernels::ConvGeometry conv_geometry(const LayerSpec& spec, const Shape& in, const Shape& out) {
  return {in[1], in[2], in[3], spec.kernel_h, spec.kernel_w, spec.stride, spec.pad, out[2], out[3]};
}

// For a transposed conv the image side of the unfold is the layer's output.
kernels::ConvGeometry transposed_geometry(const LayerSpec& spec, const Shape& in, const Shape& out) {
  return {out[1], out[2], out[3], spec.kernel_h, spec.kernel_w, spec.stride, spec.pad, in[2], in[3]};
}

std::string label(const LayerSpec& spec) {
  std::string s(layer_kind_name(spec.kind));
  if (!spec.name.empty()) s += " '" + spec.name + "'";
  return s;
}

}  // namespace

Graph::Node& Graph::node(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw StateError("invalid graph handle");
  return nodes_[v.id];
}

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw StateError("invalid graph handle");
  return nodes_[v.id];
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

void Graph::check_input(const Node& n, const LayerSpec& spec) const {
  if (!n.value.all_finite()) throw NonFiniteError(label(spec) + ": non-finite input rejected");
}

Var Graph::input(Tensor value, bool requires_grad) {
  if (value.empty()) throw ShapeError("graph input must be non-empty");
  if (!value.all_finite()) throw NonFiniteError("graph input contains non-finite values");
  Node n;
  n.is_input = true;
  n.requires_grad = requires_grad;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::forward(const LayerSpec& spec, ParamSet& params, Var x) {
  const Var in[] = {x};
  return forward(spec, &params, in);
}

Var Graph::forward(const LayerSpec& spec, Var x) {
  const Var in[] = {x};
  return forward(spec, nullptr, in);
}

Var Graph::forward(const LayerSpec& spec, ParamSet* params, std::span<const Var> inputs) {
  if (spec.kind == LayerKind::kConcat) return concat(inputs);
  if (spec.kind == LayerKind::kSoftmaxCrossEntropy || spec.kind == LayerKind::kEuclideanLoss) {
    throw StateError(label(spec) + ": loss layers take targets; use the dedicated graph helpers");
  }
  if (inputs.size() != 1) throw ShapeError(label(spec) + ": expects exactly one input");
  const Node& in = node(inputs[0]);
  check_input(in, spec);

  Node n;
  n.spec = spec;
  n.inputs = {inputs[0].id};
  n.requires_grad = in.requires_grad;
  if (spec.parametric()) {
    if (!params) throw ParamError(label(spec) + ": parameters required");
    n.params = &params->at(spec.name);
    if (n.params->weight.shape() != spec.weight_shape() || n.params->bias.shape() != spec.bias_shape()) {
      throw ShapeError(label(spec) + ": parameter shape " + shape_string(n.params->weight.shape()) +
                       " does not match layer " + shape_string(spec.weight_shape()));
    }
    n.requires_grad = n.requires_grad || !n.params->frozen;
  }
  const Shape& xs = in.value.shape();
  const Shape ys = spec.output_shape(xs);
  n.value = Tensor(ys);
  const float* x = in.value.data().data();
  float* y = n.value.data().data();
  const int batch = xs[0];

  switch (spec.kind) {
    case LayerKind::kConv2d:
      kernels::conv2d_forward(x, batch, conv_geometry(spec, xs, ys), n.params->weight.data().data(),
                              n.params->bias.data().data(), spec.out_channels, y, n.cache);
      break;
    case LayerKind::kTransposedConv2d:
      kernels::transposed_conv2d_forward(x, batch, spec.in_channels, transposed_geometry(spec, xs, ys),
                                         n.params->weight.data().data(), n.params->bias.data().data(), y);
      break;
    case LayerKind::kMaxPool:
      kernels::max_pool_forward(x, batch, xs[1], xs[2], xs[3], spec.kernel_h, spec.stride, ys[2], ys[3], y,
                                &n.indices);
      break;
    case LayerKind::kRelu:
      for (std::size_t i = 0; i < in.value.numel(); ++i) y[i] = std::max(x[i], 0.0f);
      break;
    case LayerKind::kFullyConnected:
      kernels::fully_connected_forward(x, batch, spec.in_channels, spec.out_channels,
                                       n.params->weight.data().data(), n.params->bias.data().data(), y);
      break;
    default:
      break;
  }
  return push(std::move(n));
}

Var Graph::concat(std::span<const Var> inputs) {
  if (inputs.empty()) throw ShapeError("concat: no inputs");
  Node n;
  n.spec = LayerSpec::concat();
  int batch = node(inputs[0]).value.dim(0);
  int total = 0;
  for (Var v : inputs) {
    const Node& in = node(v);
    check_input(in, n.spec);
    if (in.value.dim(0) != batch) {
      throw ShapeError("concat: batch mismatch " + shape_string(in.value.shape()) + " vs batch " +
                       std::to_string(batch));
    }
    total += static_cast<int>(in.value.numel() / batch);
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || in.requires_grad;
  }
  n.value = Tensor({batch, total});
  float* y = n.value.data().data();
  int offset = 0;
  for (Var v : inputs) {
    const Node& in = node(v);
    const int f = static_cast<int>(in.value.numel() / batch);
    for (int b = 0; b < batch; ++b)
      std::copy_n(in.value.data().data() + b * f, f, y + b * total + offset);
    offset += f;
  }
  return push(std::move(n));
}

Var Graph::softmax_cross_entropy(Var logits, std::span<const int> labels) {
  Node n;
  n.spec = LayerSpec::softmax_cross_entropy();
  const Node& in = node(logits);
  check_input(in, n.spec);
  const int batch = in.value.dim(0);
  const int classes = static_cast<int>(in.value.numel() / batch);
  if (static_cast<int>(labels.size()) != batch) {
    throw ShapeError("softmax-cross-entropy: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(batch));
  }
  for (int l : labels)
    if (l < 0 || l >= classes) throw DataError("softmax-cross-entropy: label " + std::to_string(l) + " out of range");
  n.inputs = {logits.id};
  n.requires_grad = in.requires_grad;
  n.indices.assign(labels.begin(), labels.end());
  n.cache.resize(in.value.numel());
  const float loss = kernels::softmax_cross_entropy_forward(in.value.data().data(), batch, classes,
                                                            n.indices.data(), n.cache.data());
  n.value = Tensor({1}, std::vector<float>{loss});
  return push(std::move(n));
}

Var Graph::euclidean_loss(Var pred, const Tensor& target, const Tensor& weights) {
  Node n;
  n.spec = LayerSpec::euclidean_loss();
  const Node& in = node(pred);
  check_input(in, n.spec);
  if (target.numel() != in.value.numel()) {
    throw ShapeError("euclidean-loss: target " + shape_string(target.shape()) + " vs prediction " +
                     shape_string(in.value.shape()));
  }
  if (!weights.empty() && weights.numel() != in.value.numel()) {
    throw ShapeError("euclidean-loss: weights " + shape_string(weights.shape()) + " vs prediction " +
                     shape_string(in.value.shape()));
  }
  n.inputs = {pred.id};
  n.requires_grad = in.requires_grad;
  n.target = target;
  n.weights = weights;
  const float loss = kernels::euclidean_loss_forward(in.value.data().data(), target.data().data(),
                                                     weights.empty() ? nullptr : weights.data().data(),
                                                     in.value.numel(), in.value.dim(0));
  n.value = Tensor({1}, std::vector<float>{loss});
  return push(std::move(n));
}

void Graph::backward(Var loss) {
  if (nodes_.empty() || !loss.valid() || loss.id >= nodes_.size()) {
    throw StateError("backward called before a forward pass was recorded");
  }
  const Node& root = nodes_[loss.id];
  if (root.value.numel() != 1) throw StateError("backward needs a scalar loss, got " + shape_string(root.value.shape()));
  const float one = 1.0f;
  backward(loss, std::span<const float>(&one, 1));
}

void Graph::backward(Var output, std::span<const float> seed) {
  if (nodes_.empty() || !output.valid() || output.id >= nodes_.size()) {
    throw StateError("backward called before a forward pass was recorded");
  }
  if (backward_done_) throw StateError("backward already ran on this graph");
  Node& root = nodes_[output.id];
  if (seed.size() != root.value.numel()) throw ShapeError("backward seed length does not match output");
  backward_done_ = true;
  root.grad.assign(seed.begin(), seed.end());
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.is_input || n.grad.empty() || !n.requires_grad) continue;
    backward_node(n);
  }
}

void Graph::backward_node(Node& n) {
  // Input gradient buffer for input slot k, or null when not needed.
  auto input_grad = [&](std::size_t k) -> float* {
    Node& in = nodes_[n.inputs[k]];
    if (!in.requires_grad) return nullptr;
    if (in.grad.empty()) in.grad.assign(in.value.numel(), 0.0f);
    return in.grad.data();
  };
  float* dweight = nullptr;
  float* dbias = nullptr;
  if (n.params && !n.params->frozen) {
    dweight = n.params->weight.ensure_grad().data();
    dbias = n.params->bias.ensure_grad().data();
  }
  const float* dy = n.grad.data();

  switch (n.spec.kind) {
    case LayerKind::kConv2d: {
      const Node& in = nodes_[n.inputs[0]];
      kernels::conv2d_backward(dy, in.value.dim(0), conv_geometry(n.spec, in.value.shape(), n.value.shape()),
                               n.params->weight.data().data(), n.spec.out_channels, n.cache, dweight, dbias,
                               input_grad(0));
      break;
    }
    case LayerKind::kTransposedConv2d: {
      const Node& in = nodes_[n.inputs[0]];
      kernels::transposed_conv2d_backward(dy, in.value.data().data(), in.value.dim(0), n.spec.in_channels,
                                          transposed_geometry(n.spec, in.value.shape(), n.value.shape()),
                                          n.params->weight.data().data(), dweight, dbias, input_grad(0));
      break;
    }
    case LayerKind::kMaxPool: {
      if (float* dx = input_grad(0))
        for (std::size_t o = 0; o < n.indices.size(); ++o) dx[n.indices[o]] += dy[o];
      break;
    }
    case LayerKind::kRelu: {
      if (float* dx = input_grad(0)) {
        const auto x = nodes_[n.inputs[0]].value.data();
        for (std::size_t i = 0; i < x.size(); ++i)
          if (x[i] > 0.0f) dx[i] += dy[i];
      }
      break;
    }
    case LayerKind::kFullyConnected: {
      const Node& in = nodes_[n.inputs[0]];
      kernels::fully_connected_backward(dy, in.value.data().data(), in.value.dim(0), n.spec.in_channels,
                                        n.spec.out_channels, n.params->weight.data().data(), dweight, dbias,
                                        input_grad(0));
      break;
    }
    case LayerKind::kConcat: {
      const int batch = n.value.dim(0);
      const int total = n.value.dim(1);
      int offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const int f = static_cast<int>(nodes_[n.inputs[k]].value.numel() / batch);
        if (float* dx = input_grad(k))
          for (int b = 0; b < batch; ++b)
            for (int j = 0; j < f; ++j) dx[b * f + j] += dy[b * total + offset + j];
        offset += f;
      }
      break;
    }
    case LayerKind::kSoftmaxCrossEntropy: {
      if (float* dx = input_grad(0)) {
        const int batch = static_cast<int>(n.indices.size());
        const int classes = static_cast<int>(n.cache.size()) / batch;
        const float scale = dy[0] / static_cast<float>(batch);
        for (int b = 0; b < batch; ++b)
          for (int c = 0; c < classes; ++c) {
            const float onehot = c == n.indices[b] ? 1.0f : 0.0f;
            dx[b * classes + c] += scale * (n.cache[b * classes + c] - onehot);
          }
      }
      break;
    }
    case LayerKind::kEuclideanLoss: {
      if (float* dx = input_grad(0)) {
        const Node& in = nodes_[n.inputs[0]];
        const auto x = in.value.data();
        const auto t = n.target.data();
        const float scale = dy[0] / static_cast<float>(in.value.dim(0));
        const bool weighted = !n.weights.empty();
        for (std::size_t i = 0; i < x.size(); ++i)
          dx[i] += scale * (weighted ? n.weights[i] : 1.0f) * (x[i] - t[i]);
      }
      break;
    }
  }
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

std::span<const float> Graph::grad(Var v) const { return node(v).grad; }

}  // namespace pfm
