#include "pfm/viz.hpp"

#include <algorithm>
#include <cmath>

#include "pfm/errors.hpp"

namespace pfm {

GrayImage filter_grid(const Tensor& weight, int channel, int scale) {
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) throw ShapeError("filter grid needs a square conv weight");
  const int n = weight.dim(0), in = weight.dim(1), k = weight.dim(2);
  if (channel < 0 || channel >= in) throw ParamError("filter channel out of range");
  if (scale < 1) throw ParamError("filter scale must be positive");
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  const int rows = (n + cols - 1) / cols;
  const int tile = k * scale;
  GrayImage out(cols * (tile + 1) + 1, rows * (tile + 1) + 1, 1.0f);
  for (int f = 0; f < n; ++f) {
    const float* w = weight.data().data() + (static_cast<std::size_t>(f) * in + channel) * k * k;
    const auto [lo, hi] = std::minmax_element(w, w + k * k);
    const float range = *hi - *lo;
    const int ox = (f % cols) * (tile + 1) + 1, oy = (f / cols) * (tile + 1) + 1;
    for (int y = 0; y < tile; ++y)
      for (int x = 0; x < tile; ++x) {
        const float v = w[(y / scale) * k + x / scale];
        out.at(ox + x, oy + y) = range > 0.0f ? (v - *lo) / range : 0.5f;
      }
  }
  return out;
}

}  // namespace pfm
