#pragma once

#include "pfm/params.hpp"

namespace pfm {

// v <- momentum*v + grad; p <- p - lr*v, then gradients are cleared.
// Frozen layers are skipped. A trainable layer without a gradient is an error.
void sgd_momentum_step(ParamSet& params, float lr, float momentum);

}  // namespace pfm
