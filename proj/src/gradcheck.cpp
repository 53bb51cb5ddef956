#include "pfm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pfm/errors.hpp"
#include "pfm/graph.hpp"
#include "pfm/kernels.hpp"
#include "pfm/params.hpp"

namespace pfm {

namespace {

using Buffers = std::vector<std::vector<double>>;

std::vector<double> widen(std::span<const float> v) { return {v.begin(), v.end()}; }

// Double-precision evaluation of the scalar objective for the case.
double evaluate(const GradCheckCase& c, const Buffers& inputs, const std::vector<double>& weight,
                const std::vector<double>& bias, const std::vector<double>& projection, const Shape& out_shape) {
  const LayerSpec& spec = c.spec;
  const Shape& xs = c.inputs[0].shape();
  const int batch = xs[0];
  std::vector<double> y(shape_numel(out_shape));
  switch (spec.kind) {
    case LayerKind::kConv2d: {
      std::vector<double> col;
      kernels::ConvGeometry g{xs[1], xs[2], xs[3], spec.kernel_h, spec.kernel_w, spec.stride, spec.pad,
                              out_shape[2], out_shape[3]};
      kernels::conv2d_forward(inputs[0].data(), batch, g, weight.data(), bias.data(), spec.out_channels, y.data(),
                              col);
      break;
    }
    case LayerKind::kTransposedConv2d: {
      kernels::ConvGeometry g{out_shape[1], out_shape[2], out_shape[3], spec.kernel_h, spec.kernel_w,
                              spec.stride, spec.pad, xs[2], xs[3]};
      kernels::transposed_conv2d_forward(inputs[0].data(), batch, spec.in_channels, g, weight.data(), bias.data(),
                                         y.data());
      break;
    }
    case LayerKind::kMaxPool:
      kernels::max_pool_forward(inputs[0].data(), batch, xs[1], xs[2], xs[3], spec.kernel_h, spec.stride,
                                out_shape[2], out_shape[3], y.data(), nullptr);
      break;
    case LayerKind::kRelu:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(inputs[0][i], 0.0);
      break;
    case LayerKind::kFullyConnected:
      kernels::fully_connected_forward(inputs[0].data(), batch, spec.in_channels, spec.out_channels, weight.data(),
                                       bias.data(), y.data());
      break;
    case LayerKind::kConcat: {
      const int total = out_shape[1];
      int offset = 0;
      for (const auto& in : inputs) {
        const int f = static_cast<int>(in.size()) / batch;
        for (int b = 0; b < batch; ++b)
          for (int j = 0; j < f; ++j) y[b * total + offset + j] = in[b * f + j];
        offset += f;
      }
      break;
    }
    case LayerKind::kSoftmaxCrossEntropy: {
      const int classes = static_cast<int>(inputs[0].size()) / batch;
      std::vector<double> probs(inputs[0].size());
      return kernels::softmax_cross_entropy_forward(inputs[0].data(), batch, classes, c.labels.data(),
                                                    probs.data());
    }
    case LayerKind::kEuclideanLoss: {
      const auto target = widen(c.target.data());
      const auto w = widen(c.weights.data());
      return kernels::euclidean_loss_forward(inputs[0].data(), target.data(), w.empty() ? nullptr : w.data(),
                                             inputs[0].size(), batch);
    }
  }
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += projection[i] * y[i];
  return s;
}

double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

double finite_difference_check(const GradCheckCase& c, double epsilon, std::uint64_t seed) {
  if (c.inputs.empty()) throw ShapeError("finite_difference_check: no inputs");
  if (epsilon < 1e-4 || epsilon > 1e-2) throw ParamError("finite_difference_check: epsilon must lie in [1e-4, 1e-2]");
  std::mt19937_64 rng(seed);
  ParamSet params;
  if (c.spec.parametric()) {
    LayerParams& p = params.add(c.spec, rng);
    // Non-zero bias so the check also covers bias paths meaningfully.
    for (float& b : p.bias.data()) b = std::normal_distribution<float>(0.0f, 0.5f)(rng);
  }
  const bool is_loss = c.spec.kind == LayerKind::kSoftmaxCrossEntropy || c.spec.kind == LayerKind::kEuclideanLoss;

  // Analytic side: float32 engine.
  Graph g;
  std::vector<Var> in_vars;
  for (const Tensor& t : c.inputs) in_vars.push_back(g.input(t, true));
  Var out;
  if (c.spec.kind == LayerKind::kSoftmaxCrossEntropy) {
    out = g.softmax_cross_entropy(in_vars[0], c.labels);
  } else if (c.spec.kind == LayerKind::kEuclideanLoss) {
    out = g.euclidean_loss(in_vars[0], c.target, c.weights);
  } else {
    out = g.forward(c.spec, c.spec.parametric() ? &params : nullptr, in_vars);
  }
  const Shape out_shape = g.value(out).shape();
  std::vector<double> projection;
  if (is_loss) {
    g.backward(out);
  } else {
    std::normal_distribution<float> nd(0.0f, 1.0f);
    std::vector<float> seed_grad(g.value(out).numel());
    for (float& v : seed_grad) v = nd(rng);
    projection.assign(seed_grad.begin(), seed_grad.end());
    g.backward(out, seed_grad);
  }

  // Numeric side: float64 central differences.
  Buffers inputs;
  for (const Tensor& t : c.inputs) inputs.push_back(widen(t.data()));
  std::vector<double> weight;
  std::vector<double> bias;
  if (c.spec.parametric()) {
    weight = widen(params.at(c.spec.name).weight.data());
    bias = widen(params.at(c.spec.name).bias.data());
  }
  auto f = [&] { return evaluate(c, inputs, weight, bias, projection, out_shape); };
  auto numeric = [&](double& x) {
    const double saved = x;
    x = saved + epsilon;
    const double up = f();
    x = saved - epsilon;
    const double down = f();
    x = saved;
    return (up - down) / (2.0 * epsilon);
  };

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto analytic = g.grad(in_vars[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double a = analytic.empty() ? 0.0 : analytic[i];
      worst = std::max(worst, rel_error(a, numeric(inputs[k][i])));
    }
  }
  if (c.spec.parametric()) {
    const LayerParams& p = params.at(c.spec.name);
    for (std::size_t i = 0; i < weight.size(); ++i) worst = std::max(worst, rel_error(p.weight.grad()[i], numeric(weight[i])));
    for (std::size_t i = 0; i < bias.size(); ++i) worst = std::max(worst, rel_error(p.bias.grad()[i], numeric(bias[i])));
  }
  return worst;
}

double finite_difference_check(const LayerSpec& spec, const Tensor& input, double epsilon, std::uint64_t seed) {
  GradCheckCase c;
  c.spec = spec;
  c.inputs = {input};
  return finite_difference_check(c, epsilon, seed);
}

}  // namespace pfm
