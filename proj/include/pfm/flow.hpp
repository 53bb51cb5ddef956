#pragma once

#include <filesystem>
#include <vector>

#include "pfm/image.hpp"

namespace pfm {

// Per-pixel displacement (pixels per frame) from one frame to the next.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> u;
  std::vector<float> v;

  FlowField() = default;
  FlowField(int w, int h, float u0 = 0.0f, float v0 = 0.0f)
      : width(w), height(h), u(static_cast<std::size_t>(w) * h, u0), v(static_cast<std::size_t>(w) * h, v0) {}

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  float max_magnitude() const;
  bool all_finite() const;
};

// Delta_n consecutive fields covering frames n -> n+delta_n, optionally
// cropped at (origin_x, origin_y).
struct FlowBlock {
  std::vector<FlowField> fields;
  int origin_x = 0;
  int origin_y = 0;

  int delta_n() const { return static_cast<int>(fields.size()); }
};

struct FlowParams {
  float alpha = 15.0f;     // smoothness weight, in 8-bit intensity units
  int iterations = 100;    // Jacobi sweeps per warp
  int pyramid_levels = 3;
  int warps = 2;           // re-linearisations per pyramid level
};

// Coarse-to-fine Horn-Schunck with bilinear warping. Deterministic; frames
// must share dimensions and hold values in [0, 1].
FlowField estimate_flow(const GrayImage& frame_a, const GrayImage& frame_b, const FlowParams& params = {});

// Hue encodes direction atan2(v, u); saturation encodes magnitude relative to
// `max_magnitude` (saturating); zero flow is white.
RgbImage flow_to_color(const FlowField& field, float max_magnitude);

FlowField hflip_flow(const FlowField& field);
FlowField crop_flow(const FlowField& field, int x0, int y0, int width, int height);
// Field order reversed and every displacement negated.
FlowBlock reverse_flow_block(const FlowBlock& block);

// FLO1 on-disk format: magic "FLO1", u32 width, u32 height, then
// width*height interleaved (u, v) float32 pairs, row-major, little-endian.
void write_flo1(const std::filesystem::path& path, const FlowField& field);
FlowField read_flo1(const std::filesystem::path& path);

}  // namespace pfm
