#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace pfm {

// Single-channel image, row-major, values nominally in [0, 1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  // Border-clamped read.
  float clamped(int x, int y) const;
  // Bilinear sample at continuous pixel coordinates with border clamping.
  float sample(float x, float y) const;
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
};

// Binary 8-bit PGM (P5) and PPM (P6).
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

GrayImage to_grayscale(const RgbImage& image);
GrayImage hflip(const GrayImage& image);
GrayImage crop(const GrayImage& image, int x0, int y0, int width, int height);
// Bilinear resize with pixel-centre alignment.
GrayImage resize(const GrayImage& image, int width, int height);
// Crop of the square [x0, x0+side) x [y0, y0+side) (continuous, may leave the
// frame; clamped) rescaled to `size` x `size`.
GrayImage crop_resize(const GrayImage& image, float x0, float y0, float side, int size);
GrayImage gaussian_blur(const GrayImage& image, float sigma);

}  // namespace pfm
