#pragma once

#include <cstdint>
#include <vector>

#include "pfm/layers.hpp"
#include "pfm/tensor.hpp"

namespace pfm {

// One layer instance to differentiate. Loss kinds read `labels`
// (softmax-cross-entropy) or `target`/`weights` (euclidean-loss).
struct GradCheckCase {
  LayerSpec spec;
  std::vector<Tensor> inputs;
  std::vector<int> labels;
  Tensor target;
  Tensor weights;
};

// Compares the float32 analytic gradients of the layer against central finite
// differences of a float64 evaluation of the same layer, for every parameter
// and input element. Non-loss layers are reduced to a scalar through a fixed
// random projection of their output. Parameters are drawn from `seed`.
// Returns max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double finite_difference_check(const GradCheckCase& c, double epsilon, std::uint64_t seed = 1);
double finite_difference_check(const LayerSpec& spec, const Tensor& input, double epsilon, std::uint64_t seed = 1);

}  // namespace pfm
