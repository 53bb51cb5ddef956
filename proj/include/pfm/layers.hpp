#pragma once

#include <string>
#include <string_view>

#include "pfm/tensor.hpp"

namespace pfm {

enum class LayerKind {
  kConv2d,
  kTransposedConv2d,
  kMaxPool,
  kRelu,
  kFullyConnected,
  kConcat,
  kSoftmaxCrossEntropy,
  kEuclideanLoss,
};

std::string_view layer_kind_name(LayerKind kind);

// One layer of a network. `name` is the ParamSet key for parametric kinds.
// For fully-connected layers in/out_channels hold the feature counts.
struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  std::string name;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int pad = 0;
  int in_channels = 0;
  int out_channels = 0;

  static LayerSpec conv2d(std::string name, int in, int out, int kernel, int stride = 1, int pad = 0);
  static LayerSpec transposed_conv2d(std::string name, int in, int out, int kernel, int stride = 1,
                                     int pad = 0);
  static LayerSpec max_pool(int kernel, int stride);
  static LayerSpec relu();
  static LayerSpec fully_connected(std::string name, int in_features, int out_features);
  static LayerSpec concat();
  static LayerSpec softmax_cross_entropy();
  static LayerSpec euclidean_loss();

  bool parametric() const;
  Shape weight_shape() const;
  Shape bias_shape() const;
  int fan_in() const;
  // Output shape for a single (or the first) input; throws ShapeError on mismatch.
  Shape output_shape(const Shape& input) const;
  std::string describe() const;
};

// floor((in + 2*pad - kernel) / stride) + 1
int conv_output_extent(int in, int kernel, int stride, int pad);
// (in - 1) * stride - 2*pad + kernel
int transposed_output_extent(int in, int kernel, int stride, int pad);

}  // namespace pfm
