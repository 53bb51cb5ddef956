#include "pfm/flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "pfm/binary_io.hpp"
#include "pfm/errors.hpp"

namespace pfm {

float FlowField::max_magnitude() const {
  float m = 0.0f;
  for (std::size_t i = 0; i < u.size(); ++i) m = std::max(m, std::hypot(u[i], v[i]));
  return m;
}

bool FlowField::all_finite() const {
  for (std::size_t i = 0; i < u.size(); ++i)
    if (!std::isfinite(u[i]) || !std::isfinite(v[i])) return false;
  return true;
}

namespace {

constexpr int kMinPyramidExtent = 8;

// Fourth-order central difference along x or y with clamped borders.
GrayImage derivative(const GrayImage& img, bool along_x) {
  GrayImage d(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      auto s = [&](int o) { return along_x ? img.clamped(x + o, y) : img.clamped(x, y + o); };
      d.at(x, y) = (-s(2) + 8.0f * s(1) - 8.0f * s(-1) + s(-2)) / 12.0f;
    }
  return d;
}

// Horn-Schunck neighbourhood average (weights 1/6 edge, 1/12 corner).
void neighbour_average(const std::vector<float>& f, int w, int h, std::vector<float>& out) {
  auto at = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return f[static_cast<std::size_t>(y) * w + x];
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float edge = at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1);
      const float corner = at(x - 1, y - 1) + at(x + 1, y - 1) + at(x - 1, y + 1) + at(x + 1, y + 1);
      out[static_cast<std::size_t>(y) * w + x] = edge / 6.0f + corner / 12.0f;
    }
}

GrayImage scaled(const GrayImage& img, float factor) {
  GrayImage out = img;
  for (float& p : out.pixels) p *= factor;
  return out;
}

FlowField upsample(const FlowField& f, int width, int height) {
  GrayImage u(f.width, f.height), v(f.width, f.height);
  u.pixels = f.u;
  v.pixels = f.v;
  const float sx = static_cast<float>(width) / static_cast<float>(f.width);
  const float sy = static_cast<float>(height) / static_cast<float>(f.height);
  FlowField out(width, height);
  out.u = resize(u, width, height).pixels;
  out.v = resize(v, width, height).pixels;
  for (float& x : out.u) x *= sx;
  for (float& x : out.v) x *= sy;
  return out;
}

void refine_level(const GrayImage& a, const GrayImage& b, FlowField& flow, const FlowParams& params) {
  const int w = a.width;
  const int h = a.height;
  const std::size_t n = a.pixels.size();
  const float alpha2 = params.alpha * params.alpha;
  const GrayImage ax = derivative(a, true);
  const GrayImage ay = derivative(a, false);
  std::vector<float> ubar(n), vbar(n);
  for (int warp = 0; warp < params.warps; ++warp) {
    GrayImage bw(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = flow.index(x, y);
        bw.at(x, y) = b.sample(static_cast<float>(x) + flow.u[i], static_cast<float>(y) + flow.v[i]);
      }
    const GrayImage bx = derivative(bw, true);
    const GrayImage by = derivative(bw, false);
    std::vector<float> ix(n), iy(n), it(n), denom(n);
    for (std::size_t i = 0; i < n; ++i) {
      ix[i] = 0.5f * (ax.pixels[i] + bx.pixels[i]);
      iy[i] = 0.5f * (ay.pixels[i] + by.pixels[i]);
      it[i] = bw.pixels[i] - a.pixels[i];
      denom[i] = alpha2 + ix[i] * ix[i] + iy[i] * iy[i];
    }
    const std::vector<float> u0 = flow.u;
    const std::vector<float> v0 = flow.v;
    for (int iter = 0; iter < params.iterations; ++iter) {
      neighbour_average(flow.u, w, h, ubar);
      neighbour_average(flow.v, w, h, vbar);
      for (std::size_t i = 0; i < n; ++i) {
        const float residual = ix[i] * (ubar[i] - u0[i]) + iy[i] * (vbar[i] - v0[i]) + it[i];
        const float step = residual / denom[i];
        flow.u[i] = ubar[i] - ix[i] * step;
        flow.v[i] = vbar[i] - iy[i] * step;
      }
    }
  }
}

}  // namespace

FlowField estimate_flow(const GrayImage& frame_a, const GrayImage& frame_b, const FlowParams& params) {
  if (frame_a.width != frame_b.width || frame_a.height != frame_b.height) {
    throw ShapeError("estimate_flow: frames differ in size (" + std::to_string(frame_a.width) + "x" +
                     std::to_string(frame_a.height) + " vs " + std::to_string(frame_b.width) + "x" +
                     std::to_string(frame_b.height) + ")");
  }
  if (frame_a.width <= 0 || frame_a.height <= 0) throw ShapeError("estimate_flow: empty frames");
  if (params.iterations <= 0) throw ParamError("estimate_flow: iterations must be positive");
  if (params.pyramid_levels <= 0 || params.warps <= 0) throw ParamError("estimate_flow: levels and warps must be positive");
  if (!(params.alpha > 0.0f)) throw ParamError("estimate_flow: alpha must be positive");

  std::vector<GrayImage> pa{scaled(frame_a, 255.0f)};
  std::vector<GrayImage> pb{scaled(frame_b, 255.0f)};
  while (static_cast<int>(pa.size()) < params.pyramid_levels) {
    const GrayImage& top = pa.back();
    const int w = (top.width + 1) / 2;
    const int h = (top.height + 1) / 2;
    if (w < kMinPyramidExtent || h < kMinPyramidExtent) break;
    pa.push_back(resize(gaussian_blur(top, 1.0f), w, h));
    pb.push_back(resize(gaussian_blur(pb.back(), 1.0f), w, h));
  }

  FlowField flow(pa.back().width, pa.back().height);
  for (std::size_t level = pa.size(); level-- > 0;) {
    if (flow.width != pa[level].width || flow.height != pa[level].height) {
      flow = upsample(flow, pa[level].width, pa[level].height);
    }
    refine_level(pa[level], pb[level], flow, params);
  }
  return flow;
}

RgbImage flow_to_color(const FlowField& field, float max_magnitude) {
  if (!(max_magnitude > 0.0f)) throw ParamError("flow_to_color: max_magnitude must be positive");
  RgbImage img(field.width, field.height);
  for (std::size_t i = 0; i < field.u.size(); ++i) {
    const float mag = std::hypot(field.u[i], field.v[i]);
    const float sat = std::min(mag / max_magnitude, 1.0f);
    float hue = std::atan2(field.v[i], field.u[i]) * 180.0f / std::numbers::pi_v<float>;
    if (hue < 0.0f) hue += 360.0f;
    // HSV -> RGB with value 1.
    const float h6 = hue / 60.0f;
    const int sector = static_cast<int>(h6) % 6;
    const float frac = h6 - std::floor(h6);
    const float p = 1.0f - sat;
    const float q = 1.0f - sat * frac;
    const float t = 1.0f - sat * (1.0f - frac);
    float r = 1, g = 1, b = 1;
    switch (sector) {
      case 0: r = 1; g = t; b = p; break;
      case 1: r = q; g = 1; b = p; break;
      case 2: r = p; g = 1; b = t; break;
      case 3: r = p; g = q; b = 1; break;
      case 4: r = t; g = p; b = 1; break;
      default: r = 1; g = p; b = q; break;
    }
    img.rgb[3 * i] = static_cast<std::uint8_t>(std::lround(r * 255.0f));
    img.rgb[3 * i + 1] = static_cast<std::uint8_t>(std::lround(g * 255.0f));
    img.rgb[3 * i + 2] = static_cast<std::uint8_t>(std::lround(b * 255.0f));
  }
  return img;
}

FlowField hflip_flow(const FlowField& field) {
  FlowField out(field.width, field.height);
  for (int y = 0; y < field.height; ++y)
    for (int x = 0; x < field.width; ++x) {
      const std::size_t src = field.index(field.width - 1 - x, y);
      const std::size_t dst = out.index(x, y);
      out.u[dst] = -field.u[src];
      out.v[dst] = field.v[src];
    }
  return out;
}

FlowField crop_flow(const FlowField& field, int x0, int y0, int width, int height) {
  if (x0 < 0 || y0 < 0 || x0 + width > field.width || y0 + height > field.height) {
    throw ShapeError("crop_flow: crop outside field bounds");
  }
  FlowField out(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      out.u[out.index(x, y)] = field.u[field.index(x0 + x, y0 + y)];
      out.v[out.index(x, y)] = field.v[field.index(x0 + x, y0 + y)];
    }
  return out;
}

FlowBlock reverse_flow_block(const FlowBlock& block) {
  FlowBlock out;
  out.origin_x = block.origin_x;
  out.origin_y = block.origin_y;
  out.fields.assign(block.fields.rbegin(), block.fields.rend());
  for (FlowField& f : out.fields) {
    for (float& x : f.u) x = -x;
    for (float& x : f.v) x = -x;
  }
  return out;
}

void write_flo1(const std::filesystem::path& path, const FlowField& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write flow file " + path.string());
  out.write("FLO1", 4);
  binio::put_u32(out, static_cast<std::uint32_t>(field.width));
  binio::put_u32(out, static_cast<std::uint32_t>(field.height));
  for (std::size_t i = 0; i < field.u.size(); ++i) {
    binio::put_f32(out, field.u[i]);
    binio::put_f32(out, field.v[i]);
  }
  if (!out) throw IoError("failed writing flow file " + path.string());
}

FlowField read_flo1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open flow file " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "FLO1") throw IntegrityError(path.string() + ": bad FLO1 magic");
  std::uint32_t w = 0, h = 0;
  if (!binio::get_u32(in, w) || !binio::get_u32(in, h) || w == 0 || h == 0 || w > 65536 || h > 65536) {
    throw IntegrityError(path.string() + ": bad FLO1 header");
  }
  FlowField f(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    if (!binio::get_f32(in, f.u[i]) || !binio::get_f32(in, f.v[i])) {
      throw IntegrityError(path.string() + ": truncated FLO1 data");
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IntegrityError(path.string() + ": trailing bytes in FLO1 file");
  if (!f.all_finite()) throw IntegrityError(path.string() + ": non-finite flow values");
  return f;
}

}  // namespace pfm
