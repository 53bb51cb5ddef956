#include "pfm/optim.hpp"

#include "pfm/errors.hpp"

namespace pfm {

namespace {

void step(Tensor& param, Tensor& velocity, float lr, float momentum) {
  auto p = param.data();
  auto v = velocity.data();
  auto g = param.grad();
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = momentum * v[i] + g[i];
    p[i] -= lr * v[i];
  }
}

}  // namespace

void sgd_momentum_step(ParamSet& params, float lr, float momentum) {
  if (!(lr > 0.0f)) throw ParamError("learning rate must be positive");
  if (momentum < 0.0f || momentum >= 1.0f) throw ParamError("momentum must lie in [0, 1)");
  for (auto& [name, p] : params) {
    if (p.frozen) continue;
    if (!p.weight.has_grad() || !p.bias.has_grad()) {
      throw StateError("missing gradient for parameter '" + name + "'");
    }
  }
  for (auto& [name, p] : params) {
    if (p.frozen) continue;
    step(p.weight, p.weight_velocity, lr, momentum);
    step(p.bias, p.bias_velocity, lr, momentum);
  }
  params.drop_grads();
}

}  // namespace pfm
