#include "pfm/layers.hpp"

#include <algorithm>
#include <sstream>

#include "pfm/errors.hpp"

namespace pfm {

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kTransposedConv2d: return "transposed-conv2d";
    case LayerKind::kMaxPool: return "max-pool";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kFullyConnected: return "fully-connected";
    case LayerKind::kConcat: return "concat";
    case LayerKind::kSoftmaxCrossEntropy: return "softmax-cross-entropy";
    case LayerKind::kEuclideanLoss: return "euclidean-loss";
  }
  return "unknown";
}

int conv_output_extent(int in, int kernel, int stride, int pad) {
  const int span = in + 2 * pad - kernel;
  if (span < 0 || stride <= 0) return 0;
  return span / stride + 1;
}

int transposed_output_extent(int in, int kernel, int stride, int pad) {
  return (in - 1) * stride - 2 * pad + kernel;
}

LayerSpec LayerSpec::conv2d(std::string name, int in, int out, int kernel, int stride, int pad) {
  return {LayerKind::kConv2d, std::move(name), kernel, kernel, stride, pad, in, out};
}

LayerSpec LayerSpec::transposed_conv2d(std::string name, int in, int out, int kernel, int stride, int pad) {
  return {LayerKind::kTransposedConv2d, std::move(name), kernel, kernel, stride, pad, in, out};
}

namespace {

LayerSpec of_kind(LayerKind kind) {
  LayerSpec s;
  s.kind = kind;
  return s;
}

}  // namespace

LayerSpec LayerSpec::max_pool(int kernel, int stride) {
  return {LayerKind::kMaxPool, "", kernel, kernel, stride, 0, 0, 0};
}

LayerSpec LayerSpec::relu() { return of_kind(LayerKind::kRelu); }

LayerSpec LayerSpec::fully_connected(std::string name, int in_features, int out_features) {
  return {LayerKind::kFullyConnected, std::move(name), 1, 1, 1, 0, in_features, out_features};
}

LayerSpec LayerSpec::concat() { return of_kind(LayerKind::kConcat); }
LayerSpec LayerSpec::softmax_cross_entropy() { return of_kind(LayerKind::kSoftmaxCrossEntropy); }
LayerSpec LayerSpec::euclidean_loss() { return of_kind(LayerKind::kEuclideanLoss); }

bool LayerSpec::parametric() const {
  return kind == LayerKind::kConv2d || kind == LayerKind::kTransposedConv2d || kind == LayerKind::kFullyConnected;
}

Shape LayerSpec::weight_shape() const {
  switch (kind) {
    case LayerKind::kConv2d: return {out_channels, in_channels, kernel_h, kernel_w};
    case LayerKind::kTransposedConv2d: return {in_channels, out_channels, kernel_h, kernel_w};
    case LayerKind::kFullyConnected: return {out_channels, in_channels};
    default: return {};
  }
}

Shape LayerSpec::bias_shape() const {
  if (!parametric()) return {};
  return {out_channels};
}

int LayerSpec::fan_in() const {
  switch (kind) {
    case LayerKind::kConv2d: return in_channels * kernel_h * kernel_w;
    // Each output pixel of a stride-s transposed conv sees about in*(k/s)^2 inputs.
    case LayerKind::kTransposedConv2d: {
      const int per_axis_h = std::max(1, kernel_h / std::max(1, stride));
      const int per_axis_w = std::max(1, kernel_w / std::max(1, stride));
      return in_channels * per_axis_h * per_axis_w;
    }
    case LayerKind::kFullyConnected: return in_channels;
    default: return 1;
  }
}

namespace {

std::size_t trailing_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t i = 1; i < s.size(); ++i) n *= static_cast<std::size_t>(s[i]);
  return n;
}

[[noreturn]] void mismatch(const LayerSpec& spec, const std::string& what) {
  throw ShapeError(std::string(layer_kind_name(spec.kind)) + (spec.name.empty() ? "" : " '" + spec.name + "'") +
                   ": " + what);
}

}  // namespace

Shape LayerSpec::output_shape(const Shape& in) const {
  switch (kind) {
    case LayerKind::kConv2d:
    case LayerKind::kTransposedConv2d:
    case LayerKind::kMaxPool: {
      if (in.size() != 4) mismatch(*this, "expected NCHW input, got " + shape_string(in));
      if (kind != LayerKind::kMaxPool && in[1] != in_channels) {
        mismatch(*this, "expected " + std::to_string(in_channels) + " input channels, got " +
                            std::to_string(in[1]) + " (input " + shape_string(in) + ")");
      }
      int oh = 0;
      int ow = 0;
      if (kind == LayerKind::kTransposedConv2d) {
        oh = transposed_output_extent(in[2], kernel_h, stride, pad);
        ow = transposed_output_extent(in[3], kernel_w, stride, pad);
      } else {
        oh = conv_output_extent(in[2], kernel_h, stride, kind == LayerKind::kMaxPool ? 0 : pad);
        ow = conv_output_extent(in[3], kernel_w, stride, kind == LayerKind::kMaxPool ? 0 : pad);
      }
      if (oh <= 0 || ow <= 0) mismatch(*this, "input " + shape_string(in) + " too small for kernel");
      const int channels = kind == LayerKind::kMaxPool ? in[1] : out_channels;
      return {in[0], channels, oh, ow};
    }
    case LayerKind::kRelu:
      return in;
    case LayerKind::kFullyConnected:
      if (in.empty() || trailing_numel(in) != static_cast<std::size_t>(in_channels)) {
        mismatch(*this, "expected " + std::to_string(in_channels) + " features per sample, got input " +
                            shape_string(in));
      }
      return {in[0], out_channels};
    case LayerKind::kConcat:
    case LayerKind::kSoftmaxCrossEntropy:
    case LayerKind::kEuclideanLoss:
      return {1};
  }
  return in;
}

std::string LayerSpec::describe() const {
  std::ostringstream os;
  os << layer_kind_name(kind);
  if (!name.empty()) os << ' ' << name;
  if (parametric()) os << " w=" << shape_string(weight_shape());
  if (kind != LayerKind::kFullyConnected && kind != LayerKind::kRelu && kind != LayerKind::kConcat &&
      kind != LayerKind::kSoftmaxCrossEntropy && kind != LayerKind::kEuclideanLoss) {
    os << " k=" << kernel_h << 'x' << kernel_w << " s=" << stride << " p=" << pad;
  }
  return os.str();
}

}  // namespace pfm
