#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <cmath>
#include <filesystem>
#include <string>
#include <limits>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "pfm/corpus.hpp"
#include "pfm/image.hpp"

namespace pfm::testing {

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("pfm_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& child) const { return path_ / child; }

 private:
  std::filesystem::path path_;
};

// Smooth random texture in roughly [0.1, 0.9].
inline GrayImage textured_image(int w, int h, std::uint64_t seed, float sigma = 1.5f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  GrayImage img(w, h);
  for (float& p : img.pixels) p = d(rng);
  img = gaussian_blur(img, sigma);
  float lo = 1e9f, hi = -1e9f;
  for (float p : img.pixels) {
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  for (float& p : img.pixels) p = 0.1f + 0.8f * (p - lo) / (hi - lo);
  return img;
}

// Frame b is frame a with its content moved by (dx, dy) pixels.
inline std::pair<GrayImage, GrayImage> shifted_pair(int w, int h, int dx, int dy, std::uint64_t seed) {
  constexpr int kPad = 8;
  const GrayImage big = textured_image(w + 2 * kPad, h + 2 * kPad, seed);
  return {crop(big, kPad, kPad, w, h), crop(big, kPad - dx, kPad - dy, w, h)};
}

struct BlockMatch {
  std::vector<float> u;
  std::vector<float> v;
  float mean_u = 0.0f;
  float mean_v = 0.0f;
};

// Exhaustive integer block matching (SSD over a (2r+1)^2 window, search range
// +-range) for pixels at least `margin` from the border; others stay zero.
inline BlockMatch block_match(const GrayImage& a, const GrayImage& b, int range, int r, int margin) {
  BlockMatch m;
  m.u.assign(a.pixels.size(), 0.0f);
  m.v.assign(a.pixels.size(), 0.0f);
  double su = 0.0, sv = 0.0;
  int n = 0;
  for (int y = margin; y < a.height - margin; ++y)
    for (int x = margin; x < a.width - margin; ++x, ++n) {
      double best = std::numeric_limits<double>::max();
      int bu = 0, bv = 0;
      for (int dv = -range; dv <= range; ++dv)
        for (int du = -range; du <= range; ++du) {
          double ssd = 0.0;
          for (int j = -r; j <= r; ++j)
            for (int i = -r; i <= r; ++i) {
              const double d = a.clamped(x + i, y + j) - b.clamped(x + i + du, y + j + dv);
              ssd += d * d;
            }
          if (ssd < best - 1e-12 || (std::abs(ssd - best) <= 1e-12 && du * du + dv * dv < bu * bu + bv * bv)) {
            best = ssd;
            bu = du;
            bv = dv;
          }
        }
      const std::size_t idx = static_cast<std::size_t>(y) * a.width + x;
      m.u[idx] = static_cast<float>(bu);
      m.v[idx] = static_cast<float>(bv);
      su += bu;
      sv += bv;
    }
  m.mean_u = static_cast<float>(su / n);
  m.mean_v = static_cast<float>(sv / n);
  return m;
}

// In-memory clip of smooth random frames and small random flows.
inline VideoClip noise_clip(const std::string& id, int frames, int size, std::uint64_t seed,
                            std::optional<int> label = std::nullopt) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 0.5f);
  std::vector<GrayImage> images;
  std::vector<FlowField> flows;
  for (int f = 0; f < frames; ++f) {
    images.push_back(textured_image(size, size, seed * 1000 + f));
    if (f + 1 < frames) {
      FlowField fl(size, size);
      for (float& v : fl.u) v = n(rng);
      for (float& v : fl.v) v = n(rng);
      flows.push_back(std::move(fl));
    }
  }
  ClipInfo info;
  info.id = id;
  info.frame_count = frames;
  info.width = size;
  info.height = size;
  info.label = label;
  info.has_flows = true;
  return VideoClip(info, std::move(images), std::move(flows));
}

}  // namespace pfm::testing
