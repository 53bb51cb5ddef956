#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pfm/layers.hpp"
#include "pfm/tensor.hpp"

namespace pfm {

struct LayerParams {
  Tensor weight;
  Tensor bias;
  Tensor weight_velocity;
  Tensor bias_velocity;
  bool frozen = false;
};

// Named layer parameters. Each layer name appears once, so a layer applied by
// several streams accumulates its gradient into a single buffer.
class ParamSet {
 public:
  // Adds the layer's parameters with weights ~ N(0, sqrt(2/fan_in)) and zero
  // bias. Re-adding an existing name with identical shapes is a no-op (shared
  // layer); differing shapes throw ShapeError.
  LayerParams& add(const LayerSpec& spec, std::mt19937_64& rng);
  LayerParams& add_raw(const std::string& name, Tensor weight, Tensor bias);

  bool contains(const std::string& name) const { return layers_.count(name) != 0; }
  LayerParams& at(const std::string& name);
  const LayerParams& at(const std::string& name) const;

  auto begin() { return layers_.begin(); }
  auto end() { return layers_.end(); }
  auto begin() const { return layers_.begin(); }
  auto end() const { return layers_.end(); }
  std::size_t size() const { return layers_.size(); }

  void drop_grads();
  // Freezes (or unfreezes) every layer whose name starts with `prefix`.
  void set_frozen(const std::string& prefix, bool frozen);
  std::size_t parameter_count() const;

 private:
  std::map<std::string, LayerParams> layers_;
};

}  // namespace pfm
