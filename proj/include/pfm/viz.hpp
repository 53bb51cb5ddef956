#pragma once

#include "pfm/image.hpp"
#include "pfm/tensor.hpp"

namespace pfm {

// Tiles the filters of a conv weight (out x in x k x k) into a near-square
// grid, one tile per output filter showing input channel `channel`, each tile
// contrast-stretched to [0, 1], enlarged by `scale` and separated by a 1 px
// border.
GrayImage filter_grid(const Tensor& weight, int channel = 0, int scale = 4);

}  // namespace pfm
