#include <gtest/gtest.h>

#include <set>

#include "pfm/errors.hpp"
#include "pfm/sampler.hpp"

using namespace pfm;

namespace {

// Pixel and flow values encode their own origin exactly (integers < 2^24).
float code(int clip, int frame, int x, int y) {
  return static_cast<float>(clip * 1000000 + frame * 10000 + y * 100 + x);
}

VideoClip coded_clip(int index, int frames, int size, bool with_flows = true) {
  std::vector<GrayImage> images;
  std::vector<FlowField> flows;
  for (int f = 0; f < frames; ++f) {
    GrayImage img(size, size);
    FlowField fl(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        img.at(x, y) = code(index, f, x, y);
        fl.u[fl.index(x, y)] = code(index, f, x, y);
        fl.v[fl.index(x, y)] = -code(index, f, x, y) - 0.5f;
      }
    images.push_back(img);
    if (with_flows && f + 1 < frames) flows.push_back(fl);
  }
  ClipInfo info;
  info.id = "clip" + std::to_string(index);
  return VideoClip(info, std::move(images), std::move(flows));
}

std::vector<VideoClip> coded_corpus(int clips, int frames, int size) {
  std::vector<VideoClip> out;
  for (int i = 0; i < clips; ++i) out.push_back(coded_clip(i, frames, size));
  return out;
}

SamplerConfig config(int dn, int patch) { return SamplerConfig{dn, patch, 1}; }

float at4(const Tensor& t, int c, int y, int x) {
  const int p = t.dim(t.rank() - 1);
  return t.data()[(static_cast<std::size_t>(c) * p + y) * p + x];
}

// Checks a sample against its provenance by decoding every value.
void expect_consistent(const TripletSample& s, int patch, int dn) {
  const Provenance& pr = s.provenance;
  EXPECT_EQ(s.label == 1, pr.appearance_clip == pr.flow_clip && pr.appearance_frame == pr.flow_frame);
  if (s.label == 0) {
    EXPECT_NE(pr.appearance_clip, pr.flow_clip);
  }
  const int fa = pr.reversed ? pr.appearance_frame + dn : pr.appearance_frame;
  const int fb = pr.reversed ? pr.appearance_frame : pr.appearance_frame + dn;
  for (int y = 0; y < patch; ++y)
    for (int x = 0; x < patch; ++x) {
      const int sx = pr.flipped ? patch - 1 - x : x;
      ASSERT_EQ(at4(s.patch_a, 0, y, x), code(pr.appearance_clip, fa, pr.crop_x + sx, pr.crop_y + y));
      ASSERT_EQ(at4(s.patch_b, 0, y, x), code(pr.appearance_clip, fb, pr.crop_x + sx, pr.crop_y + y));
      for (int k = 0; k < dn; ++k) {
        const int field = pr.reversed ? dn - 1 - k : k;
        const float sign = pr.reversed ? -1.0f : 1.0f;
        const float c = code(pr.flow_clip, pr.flow_frame + field, pr.flow_x + sx, pr.flow_y + y);
        ASSERT_EQ(at4(s.flow_block, 2 * k, y, x), sign * (pr.flipped ? -c : c));
        ASSERT_EQ(at4(s.flow_block, 2 * k + 1, y, x), sign * (-c - 0.5f));
      }
    }
}

}  // namespace

TEST(SamplePositiveTest, TwelveFieldsGiveTwentyFourChannels) {
  const auto clips = coded_corpus(2, 16, 12);
  Rng rng(1);
  const TripletSample s = sample_positive(clips, config(12, 8), rng);
  EXPECT_EQ(s.flow_block.shape(), (Shape{24, 8, 8}));
  EXPECT_EQ(s.patch_a.shape(), (Shape{1, 1, 8, 8}));
}

TEST(SamplePositiveTest, ProvenanceAndAlignment) {
  const auto clips = coded_corpus(3, 9, 14);
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const TripletSample s = sample_positive(clips, config(4, 6), rng);
    const Provenance& p = s.provenance;
    EXPECT_EQ(s.label, 1);
    EXPECT_EQ(p.appearance_clip, p.flow_clip);
    EXPECT_EQ(p.appearance_frame, p.flow_frame);
    EXPECT_EQ(p.crop_x, p.flow_x);
    EXPECT_EQ(p.crop_y, p.flow_y);
    EXPECT_LE(p.appearance_frame + 4, 8);
    expect_consistent(s, 6, 4);
  }
}

TEST(SamplePositiveTest, CoversEveryClip) {
  // Under uniform clip choice the chance that 1000 draws miss one of 40
  // clips is 40 * (39/40)^1000 < 1e-9.
  const auto clips = coded_corpus(40, 6, 10);
  Rng rng(3);
  std::set<int> seen;
  for (int t = 0; t < 1000; ++t) seen.insert(sample_positive(clips, config(4, 8), rng).provenance.appearance_clip);
  EXPECT_EQ(seen.size(), 40u);
}

TEST(SamplePositiveTest, SkipsShortClipsAndReportsMissingFlows) {
  std::vector<VideoClip> clips;
  clips.push_back(coded_clip(0, 3, 10));  // too short for delta_n = 4
  clips.push_back(coded_clip(1, 7, 10));
  Rng rng(4);
  for (int t = 0; t < 50; ++t) EXPECT_EQ(sample_positive(clips, config(4, 8), rng).provenance.appearance_clip, 1);

  std::vector<VideoClip> short_only;
  short_only.push_back(coded_clip(0, 3, 10));
  EXPECT_THROW(sample_positive(short_only, config(4, 8), rng), DataError);

  clips.push_back(coded_clip(2, 7, 10, false));
  try {
    sample_positive(clips, config(4, 8), rng);
    FAIL() << "expected NotFoundError";
  } catch (const NotFoundError& e) {
    EXPECT_NE(std::string(e.what()).find("clip2"), std::string::npos);
  }
  EXPECT_THROW(sample_positive(coded_corpus(2, 7, 6), config(4, 8), rng), ShapeError);
}

TEST(SampleNegativeTest, NeverFromTheSameClip) {
  const auto clips = coded_corpus(5, 7, 10);
  Rng rng(5);
  const SamplerConfig cfg = config(3, 6);
  for (int t = 0; t < 10000; ++t) {
    const TripletSample pos = sample_positive(clips, cfg, rng);
    const TripletSample neg = sample_negative(clips, pos, cfg, rng);
    ASSERT_NE(neg.provenance.flow_clip, neg.provenance.appearance_clip);
    ASSERT_EQ(neg.label, 0);
    if (t % 500 == 0) {
      EXPECT_EQ(neg.patch_a.storage(), pos.patch_a.storage());
      EXPECT_EQ(neg.patch_b.storage(), pos.patch_b.storage());
      expect_consistent(neg, 6, 3);
    }
  }
}

TEST(SampleNegativeTest, TwoClipsAndOneClip) {
  const auto two = coded_corpus(2, 7, 10);
  Rng rng(6);
  for (int t = 0; t < 200; ++t) {
    const TripletSample pos = sample_positive(two, config(4, 8), rng);
    EXPECT_EQ(sample_negative(two, pos, config(4, 8), rng).provenance.flow_clip, 1 - pos.provenance.appearance_clip);
  }
  const auto one = coded_corpus(1, 7, 10);
  const TripletSample pos = sample_positive(one, config(4, 8), rng);
  EXPECT_THROW(sample_negative(one, pos, config(4, 8), rng), DataError);
}

TEST(AugmentTest, FlipTwiceIsIdentity) {
  const auto clips = coded_corpus(2, 7, 10);
  Rng rng(7);
  const TripletSample s = sample_positive(clips, config(4, 8), rng);
  const TripletSample once = augment(s, rng, 1.0f, 0.0f);
  EXPECT_TRUE(once.provenance.flipped);
  expect_consistent(once, 8, 4);
  const TripletSample twice = augment(once, rng, 1.0f, 0.0f);
  EXPECT_EQ(twice.patch_a.storage(), s.patch_a.storage());
  EXPECT_EQ(twice.patch_b.storage(), s.patch_b.storage());
  EXPECT_EQ(twice.flow_block.storage(), s.flow_block.storage());
}

TEST(AugmentTest, FlipMatchesFlowFieldFlip) {
  const auto clips = coded_corpus(2, 7, 10);
  Rng rng(8);
  const TripletSample s = sample_positive(clips, config(2, 10), rng);  // full-frame crop
  const TripletSample f = augment(s, rng, 1.0f, 0.0f);
  const int n = s.provenance.flow_frame;
  for (int k = 0; k < 2; ++k) {
    const FlowField oracle = hflip_flow(clips[s.provenance.flow_clip].flow(n + k));
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x) {
        EXPECT_EQ(at4(f.flow_block, 2 * k, y, x), oracle.u[oracle.index(x, y)]);
        EXPECT_EQ(at4(f.flow_block, 2 * k + 1, y, x), oracle.v[oracle.index(x, y)]);
      }
  }
}

TEST(AugmentTest, ReverseSwapsPatchesAndNegatesReversedBlock) {
  const auto clips = coded_corpus(2, 9, 10);
  Rng rng(9);
  const TripletSample s = sample_positive(clips, config(3, 10), rng);
  const TripletSample r = augment(s, rng, 0.0f, 1.0f);
  EXPECT_EQ(r.label, 1);
  EXPECT_EQ(r.patch_a.storage(), s.patch_b.storage());
  EXPECT_EQ(r.patch_b.storage(), s.patch_a.storage());
  FlowBlock block;
  for (int k = 0; k < 3; ++k) block.fields.push_back(clips[s.provenance.flow_clip].flow(s.provenance.flow_frame + k));
  const FlowBlock oracle = reverse_flow_block(block);
  for (int k = 0; k < 3; ++k)
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x) {
        EXPECT_EQ(at4(r.flow_block, 2 * k, y, x), oracle.fields[k].u[oracle.fields[k].index(x, y)]);
        EXPECT_EQ(at4(r.flow_block, 2 * k + 1, y, x), oracle.fields[k].v[oracle.fields[k].index(x, y)]);
      }
}

TEST(AugmentTest, ZeroProbabilitiesAreIdentity) {
  const auto clips = coded_corpus(2, 7, 10);
  Rng rng(10);
  for (int t = 0; t < 20; ++t) {
    const TripletSample s = sample_positive(clips, config(4, 8), rng);
    const TripletSample a = augment(s, rng, 0.0f, 0.0f);
    EXPECT_EQ(a.patch_a.storage(), s.patch_a.storage());
    EXPECT_EQ(a.flow_block.storage(), s.flow_block.storage());
    EXPECT_FALSE(a.provenance.flipped || a.provenance.reversed);
  }
}

TEST(MakeBatchTest, CompositionAndChance) {
  const auto clips = coded_corpus(6, 8, 12);
  Rng rng(11);
  BatchConfig bc;
  bc.positives = 4;
  bc.negatives_per_positive = 2;
  bc.sampler = config(4, 8);
  const Batch b = make_batch(clips, bc, rng);
  ASSERT_EQ(b.samples.size(), 12u);
  EXPECT_EQ(b.positive_count(), 4);
  // A constant "mismatch" predictor is right on every negative.
  int correct = 0;
  for (const auto& s : b.samples) correct += s.label == 0;
  EXPECT_NEAR(static_cast<double>(correct) / b.samples.size(), 2.0 / 3.0, 1e-12);
}

TEST(MakeBatchTest, HundredBatchesRespectConstraints) {
  const auto clips = coded_corpus(4, 9, 12);
  Rng rng(12);
  BatchConfig bc;
  bc.positives = 6;
  bc.sampler = config(4, 8);
  int flips = 0, reversals = 0, total = 0;
  for (int t = 0; t < 100; ++t) {
    const Batch b = make_batch(clips, bc, rng);
    ASSERT_EQ(b.samples.size(), 18u);
    std::set<std::pair<int, int>> positive_sources;
    for (const auto& s : b.samples)
      if (s.label == 1) positive_sources.insert({s.provenance.appearance_clip, s.provenance.appearance_frame});
    for (const auto& s : b.samples) {
      expect_consistent(s, 8, 4);
      if (s.label == 0) {
        // In-batch mining: the flow comes from another positive's (clip, frame).
        EXPECT_TRUE(positive_sources.count({s.provenance.flow_clip, s.provenance.flow_frame}));
      }
      flips += s.provenance.flipped;
      reversals += s.provenance.reversed;
      ++total;
    }
  }
  // p = 0.5 each; 1800 draws keep both within 5 sigma of 900.
  EXPECT_NEAR(flips, total / 2, 110);
  EXPECT_NEAR(reversals, total / 2, 110);
}

TEST(MakeBatchTest, SingleSourceBatchFallsBackToFreshNegatives) {
  std::vector<VideoClip> clips = coded_corpus(2, 7, 10);
  Rng rng(13);
  BatchConfig bc;
  bc.positives = 1;
  bc.sampler = config(4, 8);
  const Batch b = make_batch(clips, bc, rng);
  ASSERT_EQ(b.samples.size(), 3u);
  for (const auto& s : b.samples) expect_consistent(s, 8, 4);
}

TEST(MakeBatchTest, DeterministicAndStackable) {
  const auto clips = coded_corpus(3, 8, 12);
  BatchConfig bc;
  bc.positives = 3;
  bc.sampler = config(2, 8);
  Rng r1(14), r2(14);
  const BatchTensors a = stack(make_batch(clips, bc, r1));
  const BatchTensors b = stack(make_batch(clips, bc, r2));
  EXPECT_EQ(a.patch_a.shape(), (Shape{9, 1, 8, 8}));
  EXPECT_EQ(a.flow_block.shape(), (Shape{9, 4, 8, 8}));
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.patch_a.storage(), b.patch_a.storage());
  EXPECT_EQ(a.flow_block.storage(), b.flow_block.storage());
}

TEST(CropPatchTest, ReplicatesChannels) {
  const auto clip = coded_clip(0, 2, 10);
  const Tensor t = crop_patch(clip.frame(1), 2, 3, 4, 3);
  EXPECT_EQ(t.shape(), (Shape{1, 3, 4, 4}));
  for (int c = 0; c < 3; ++c) EXPECT_EQ(at4(t, c, 1, 2), code(0, 1, 4, 4));
  EXPECT_THROW(crop_patch(clip.frame(0), 7, 0, 4, 1), ShapeError);
}
