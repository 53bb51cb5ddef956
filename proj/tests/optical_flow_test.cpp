#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "pfm/errors.hpp"
#include "pfm/flow.hpp"
#include "test_support.hpp"

using namespace pfm;
using pfm::testing::block_match;
using pfm::testing::shifted_pair;
using pfm::testing::textured_image;

namespace {

float mean_interior(const std::vector<float>& f, int w, int h, int margin) {
  double s = 0.0;
  int n = 0;
  for (int y = margin; y < h - margin; ++y)
    for (int x = margin; x < w - margin; ++x, ++n) s += f[static_cast<std::size_t>(y) * w + x];
  return static_cast<float>(s / n);
}

float hue_of(const RgbImage& img, std::size_t i) {
  const float r = img.rgb[3 * i] / 255.0f, g = img.rgb[3 * i + 1] / 255.0f, b = img.rgb[3 * i + 2] / 255.0f;
  const float mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const float d = mx - mn;
  float h = 0.0f;
  if (d == 0.0f) return 0.0f;
  if (mx == r) h = 60.0f * std::fmod((g - b) / d, 6.0f);
  else if (mx == g) h = 60.0f * ((b - r) / d + 2.0f);
  else h = 60.0f * ((r - g) / d + 4.0f);
  return h < 0 ? h + 360.0f : h;
}

}  // namespace

TEST(EstimateFlowTest, IdenticalFramesGiveZeroFlow) {
  const GrayImage a = textured_image(64, 64, 1);
  for (int levels = 1; levels <= 3; ++levels) {
    FlowParams p;
    p.pyramid_levels = levels;
    const FlowField f = estimate_flow(a, a, p);
    EXPECT_LT(f.max_magnitude(), 1e-3f) << "levels " << levels;
  }
}

TEST(EstimateFlowTest, RightShiftByTwo) {
  const auto [a, b] = shifted_pair(64, 64, 2, 0, 5);
  const FlowField f = estimate_flow(a, b);
  const auto oracle = block_match(a, b, 4, 3, 8);
  EXPECT_NEAR(oracle.mean_u, 2.0f, 1e-6f);
  const float mu = mean_interior(f.u, 64, 64, 8);
  const float mv = mean_interior(f.v, 64, 64, 8);
  EXPECT_GE(mu, 1.6f);
  EXPECT_LE(mu, 2.4f);
  EXPECT_LT(std::abs(mv), 0.3f);
}

TEST(EstimateFlowTest, DownShiftByOne) {
  const auto [a, b] = shifted_pair(64, 64, 0, 1, 6);
  const FlowField f = estimate_flow(a, b);
  EXPECT_NEAR(block_match(a, b, 4, 3, 8).mean_v, 1.0f, 1e-6f);
  const float mv = mean_interior(f.v, 64, 64, 8);
  EXPECT_GE(mv, 0.7f);
  EXPECT_LE(mv, 1.3f);
}

TEST(EstimateFlowTest, TranslationRecoveryAgainstBlockMatching) {
  for (int dy = -3; dy <= 3; ++dy)
    for (int dx = -3; dx <= 3; ++dx) {
      const auto [a, b] = shifted_pair(64, 64, dx, dy, 100 + dx * 7 + dy);
      const int margin = std::max(2 * std::max(std::abs(dx), std::abs(dy)), 4);
      const auto oracle = block_match(a, b, 4, 3, margin);
      const FlowField f = estimate_flow(a, b);
      double epe = 0.0;
      int n = 0;
      for (int y = margin; y < 64 - margin; ++y)
        for (int x = margin; x < 64 - margin; ++x, ++n) {
          const std::size_t i = f.index(x, y);
          epe += std::hypot(f.u[i] - oracle.u[i], f.v[i] - oracle.v[i]);
        }
      EXPECT_LT(epe / n, 0.5) << "shift " << dx << "," << dy;
    }
}

TEST(EstimateFlowTest, Deterministic) {
  const auto [a, b] = shifted_pair(48, 40, 1, -1, 7);
  const FlowField f1 = estimate_flow(a, b);
  const FlowField f2 = estimate_flow(a, b);
  EXPECT_EQ(f1.u, f2.u);
  EXPECT_EQ(f1.v, f2.v);
}

TEST(EstimateFlowTest, Errors) {
  const GrayImage a(16, 16, 0.5f), b(16, 12, 0.5f);
  EXPECT_THROW(estimate_flow(a, b), ShapeError);
  FlowParams p;
  p.iterations = 0;
  EXPECT_THROW(estimate_flow(a, a, p), ParamError);
}

TEST(FlowColorTest, ZeroFieldIsWhite) {
  const RgbImage img = flow_to_color(FlowField(8, 8), 1.0f);
  for (auto c : img.rgb) EXPECT_EQ(c, 255);
}

TEST(FlowColorTest, UniformFieldSingleSaturatedHue) {
  const RgbImage img = flow_to_color(FlowField(8, 8, 2.0f, 0.0f), 2.0f);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_EQ(img.rgb[3 * i], img.rgb[0]);
    EXPECT_EQ(img.rgb[3 * i + 1], img.rgb[1]);
    EXPECT_EQ(img.rgb[3 * i + 2], img.rgb[2]);
  }
  const auto [mn, mx] = std::minmax({img.rgb[0], img.rgb[1], img.rgb[2]});
  EXPECT_EQ(mn, 0);  // full saturation
  EXPECT_EQ(mx, 255);
}

TEST(FlowColorTest, NegationRotatesHue) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  FlowField f(16, 16);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    f.u[i] = d(rng);
    f.v[i] = d(rng);
  }
  FlowField neg = f;
  for (auto& x : neg.u) x = -x;
  for (auto& x : neg.v) x = -x;
  const RgbImage a = flow_to_color(f, 0.5f), b = flow_to_color(neg, 0.5f);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    if (std::hypot(f.u[i], f.v[i]) < 0.2f) continue;  // hue ill-conditioned near white
    float diff = std::fmod(hue_of(b, i) - hue_of(a, i) + 720.0f, 360.0f);
    EXPECT_NEAR(diff, 180.0f, 4.0f);
  }
  EXPECT_THROW(flow_to_color(f, 0.0f), ParamError);
}

TEST(FlipFlowTest, InvolutionAndSignRule) {
  const auto [a, b] = shifted_pair(20, 10, 1, 0, 2);
  const FlowField f = estimate_flow(a, b);
  const FlowField twice = hflip_flow(hflip_flow(f));
  EXPECT_EQ(twice.u, f.u);
  EXPECT_EQ(twice.v, f.v);
  const FlowField flipped = hflip_flow(FlowField(5, 3, 1.0f, 0.0f));
  for (float x : flipped.u) EXPECT_EQ(x, -1.0f);
  for (float x : flipped.v) EXPECT_EQ(x, 0.0f);
}

TEST(FlipFlowTest, SolverIsFlipEquivariant) {
  for (int seed = 0; seed < 3; ++seed) {
    const auto [a, b] = shifted_pair(64, 48, 2 - seed, seed - 1, 40 + seed);
    const FlowField lhs = estimate_flow(hflip(a), hflip(b));
    const FlowField rhs = hflip_flow(estimate_flow(a, b));
    float worst = 0.0f;
    for (std::size_t i = 0; i < lhs.u.size(); ++i)
      worst = std::max({worst, std::abs(lhs.u[i] - rhs.u[i]), std::abs(lhs.v[i] - rhs.v[i])});
    EXPECT_LT(worst, 0.2f);
  }
}

TEST(ReverseBlockTest, InvolutionAndSignRule) {
  FlowBlock block;
  for (int k = 0; k < 3; ++k) block.fields.push_back(FlowField(4, 4, static_cast<float>(k), 1.0f));
  const FlowBlock twice = reverse_flow_block(reverse_flow_block(block));
  for (int k = 0; k < 3; ++k) EXPECT_EQ(twice.fields[k].u, block.fields[k].u);

  FlowBlock uniform;
  uniform.fields.assign(4, FlowField(3, 3, 1.0f, 0.0f));
  for (const FlowField& f : reverse_flow_block(uniform).fields) {
    for (float x : f.u) EXPECT_EQ(x, -1.0f);
    for (float x : f.v) EXPECT_EQ(x, -0.0f);
  }
}

TEST(ReverseBlockTest, MatchesBackwardFlowOnSyntheticClip) {
  const auto [a, b] = shifted_pair(64, 64, 1, 2, 77);
  FlowBlock forward;
  forward.fields.push_back(estimate_flow(a, b));
  const FlowField backward = estimate_flow(b, a);
  const FlowBlock reversed = reverse_flow_block(forward);
  const FlowField& rev = reversed.fields[0];
  double err = 0.0;
  int n = 0;
  for (int y = 6; y < 58; ++y)
    for (int x = 6; x < 58; ++x, ++n) {
      const std::size_t i = rev.index(x, y);
      err += std::abs(rev.u[i] - backward.u[i]) + std::abs(rev.v[i] - backward.v[i]);
    }
  EXPECT_LT(err / (2.0 * n), 0.3);
}

TEST(Flo1Test, RoundTripAndCorruption) {
  const auto dir = std::filesystem::temp_directory_path() / "pfm_flo1_test";
  std::filesystem::create_directories(dir);
  FlowField f(7, 5);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    f.u[i] = 0.25f * static_cast<float>(i);
    f.v[i] = -1.5f + static_cast<float>(i);
  }
  write_flo1(dir / "a.flo1", f);
  const FlowField g = read_flo1(dir / "a.flo1");
  EXPECT_EQ(g.width, 7);
  EXPECT_EQ(g.u, f.u);
  EXPECT_EQ(g.v, f.v);
  EXPECT_EQ(std::filesystem::file_size(dir / "a.flo1"), 12u + 8u * 35u);
  {
    std::ifstream in(dir / "a.flo1", std::ios::binary);
    char head[8];
    in.read(head, 8);
    EXPECT_EQ(std::string(head, 4), "FLO1");
    EXPECT_EQ(static_cast<unsigned char>(head[4]), 7);  // little-endian width
  }
  std::filesystem::resize_file(dir / "a.flo1", 40);
  EXPECT_THROW(read_flo1(dir / "a.flo1"), IntegrityError);
  std::filesystem::remove_all(dir);
}
