#include "pfm/params.hpp"

#include <cmath>

#include "pfm/errors.hpp"

namespace pfm {

LayerParams& ParamSet::add(const LayerSpec& spec, std::mt19937_64& rng) {
  if (!spec.parametric()) throw ParamError("layer kind has no parameters: " + spec.describe());
  if (spec.name.empty()) throw ParamError("parametric layer needs a name: " + spec.describe());
  const Shape ws = spec.weight_shape();
  const Shape bs = spec.bias_shape();
  if (auto it = layers_.find(spec.name); it != layers_.end()) {
    if (it->second.weight.shape() != ws || it->second.bias.shape() != bs) {
      throw ShapeError("layer '" + spec.name + "' already registered with weight " +
                       shape_string(it->second.weight.shape()) + ", requested " + shape_string(ws));
    }
    return it->second;
  }
  const float stddev = std::sqrt(2.0f / static_cast<float>(spec.fan_in()));
  return add_raw(spec.name, Tensor::randn(ws, stddev, rng), Tensor(bs));
}

LayerParams& ParamSet::add_raw(const std::string& name, Tensor weight, Tensor bias) {
  LayerParams p;
  p.weight_velocity = Tensor(weight.shape());
  p.bias_velocity = Tensor(bias.shape());
  p.weight = std::move(weight);
  p.bias = std::move(bias);
  auto [it, inserted] = layers_.insert_or_assign(name, std::move(p));
  return it->second;
}

LayerParams& ParamSet::at(const std::string& name) {
  auto it = layers_.find(name);
  if (it == layers_.end()) throw NotFoundError("no parameters for layer '" + name + "'");
  return it->second;
}

const LayerParams& ParamSet::at(const std::string& name) const {
  auto it = layers_.find(name);
  if (it == layers_.end()) throw NotFoundError("no parameters for layer '" + name + "'");
  return it->second;
}

void ParamSet::drop_grads() {
  for (auto& [name, p] : layers_) {
    p.weight.drop_grad();
    p.bias.drop_grad();
  }
}

void ParamSet::set_frozen(const std::string& prefix, bool frozen) {
  for (auto& [name, p] : layers_)
    if (name.rfind(prefix, 0) == 0) p.frozen = frozen;
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : layers_) n += p.weight.numel() + p.bias.numel();
  return n;
}

}  // namespace pfm
