#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pfm/corpus.hpp"
#include "pfm/errors.hpp"
#include "test_support.hpp"

using namespace pfm;
using pfm::testing::block_match;
using pfm::testing::ScratchDir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CorpusConfig small_config(int clips, int frames, std::vector<std::string> actions = {"wave", "squat"}) {
  CorpusConfig c;
  c.num_clips = clips;
  c.frames_per_clip = frames;
  c.actions = std::move(actions);
  return c;
}

std::vector<Pose> read_all_joints(const fs::path& file) {
  std::ifstream in(file);
  std::vector<Pose> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(parse_joints_line(line, kNumJoints));
  return out;
}

}  // namespace

TEST(SkeletonTest, TreeIsRootedAndOrdered) {
  const SkeletonModel m = SkeletonModel::standard();
  for (std::size_t i = 0; i < m.bones.size(); ++i) EXPECT_LT(m.bones[i].parent, static_cast<int>(i));
  // Every annotated joint is the end of exactly one bone.
  std::vector<int> seen(kNumJoints, 0);
  for (const Bone& b : m.bones)
    if (b.joint >= 0) ++seen[b.joint];
  for (int k = 0; k < kNumJoints; ++k) EXPECT_EQ(seen[k], 1) << joint_name(k);
}

TEST(SkeletonTest, RestPoseByHand) {
  const SkeletonModel m = SkeletonModel::standard();
  std::vector<float> rest;
  for (const Bone& b : m.bones) rest.push_back(b.rest_angle);
  const auto p = m.place({50.0f, 60.0f}, rest);
  // Neck sits 24 px above the pelvis; shoulders 10 px either side of it.
  EXPECT_NEAR(p.joints[kLeftShoulder].x, 60.0f, 1e-4f);
  EXPECT_NEAR(p.joints[kLeftShoulder].y, 36.0f, 1e-4f);
  EXPECT_NEAR(p.joints[kRightShoulder].x, 40.0f, 1e-4f);
  EXPECT_NEAR(p.joints[kNose].y, 27.0f, 1e-4f);
  EXPECT_NEAR(p.joints[kLeftHip].x, 57.0f, 1e-4f);
  EXPECT_NEAR(p.joints[kRightHip].x, 43.0f, 1e-4f);
  // Left elbow: 13 px at 80 degrees below horizontal.
  const float a = 80.0f * std::numbers::pi_v<float> / 180.0f;
  EXPECT_NEAR(p.joints[kLeftElbow].x, 60.0f + 13.0f * std::cos(a), 1e-4f);
  EXPECT_NEAR(p.joints[kLeftElbow].y, 36.0f + 13.0f * std::sin(a), 1e-4f);
}

TEST(GenerateCorpusTest, CountsFollowConfig) {
  ScratchDir dir("gen");
  const Corpus c = generate_corpus(dir.path(), small_config(4, 30), 7);
  ASSERT_EQ(c.size(), 4u);
  for (const ClipInfo& info : c.clips()) {
    int frames = 0;
    for (const auto& e : fs::directory_iterator(info.dir / "frames")) frames += e.path().extension() == ".pgm";
    EXPECT_EQ(frames, 30);
    const auto joints = read_all_joints(info.dir / "joints.txt");
    ASSERT_EQ(joints.size(), 30u);
    for (const Pose& p : joints) EXPECT_EQ(p.size(), 9u);
    EXPECT_TRUE(info.label.has_value());
    EXPECT_EQ(slurp(info.dir / "label.txt"), std::to_string(*info.label) + "\n");
  }
  EXPECT_EQ(slurp(dir / "index.txt"), "clip_0000\nclip_0001\nclip_0002\nclip_0003\n");
}

TEST(GenerateCorpusTest, ByteIdenticalForSameSeed) {
  ScratchDir a("det_a"), b("det_b");
  CorpusConfig cfg = small_config(3, 8);
  generate_corpus(a.path(), cfg, 11);
  cfg.workers = 3;  // parallel generation must not change the output
  generate_corpus(b.path(), cfg, 11);
  int compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a.path());
    ASSERT_TRUE(fs::exists(b.path() / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(b.path() / rel)) << rel;
    ++compared;
  }
  EXPECT_EQ(compared, 3 * (8 + 2) + 2);

  ScratchDir c("det_c");
  generate_corpus(c.path(), small_config(3, 8), 12);
  EXPECT_NE(slurp(a / "clip_0000/frames/00003.pgm"), slurp(c / "clip_0000/frames/00003.pgm"));
}

TEST(GenerateCorpusTest, WaveWristFollowsSinusoid) {
  ScratchDir dir("wave");
  CorpusConfig cfg = small_config(1, 30, {"wave"});
  cfg.jitter = JitterRanges{0.0f, 0.0f, 0.0f, 0.0f};
  generate_corpus(dir.path(), cfg, 3);
  const auto joints = read_all_joints(dir / "clip_0000/joints.txt");

  // Oracle: with zero jitter the pelvis is at (48, 56), the left shoulder
  // 24 px up and 10 px right, the upper arm raised 30 degrees, and the
  // forearm at -50 + 35 sin(2 pi t / 12) degrees.
  const double pi = std::numbers::pi;
  const double ex = 58.0 + 13.0 * std::cos(-30.0 * pi / 180.0), ey = 32.0 + 13.0 * std::sin(-30.0 * pi / 180.0);
  for (int t = 0; t < 30; ++t) {
    const double angle = (-50.0 + 35.0 * std::sin(2.0 * pi * t / 12.0)) * pi / 180.0;
    EXPECT_NEAR(joints[t][kLeftWrist].x, ex + 12.0 * std::cos(angle), 2e-3);
    EXPECT_NEAR(joints[t][kLeftWrist].y, ey + 12.0 * std::sin(angle), 2e-3);
  }

  // Extrema of the wrist height sit a half period (6 frames) apart, and
  // consecutive maxima a full period apart.
  std::vector<int> maxima, minima;
  for (int t = 1; t + 1 < 30; ++t) {
    const float y0 = joints[t - 1][kLeftWrist].y, y1 = joints[t][kLeftWrist].y, y2 = joints[t + 1][kLeftWrist].y;
    if (y1 > y0 && y1 > y2) maxima.push_back(t);
    if (y1 < y0 && y1 < y2) minima.push_back(t);
  }
  EXPECT_EQ(maxima, (std::vector<int>{3, 15, 27}));
  EXPECT_EQ(minima, (std::vector<int>{9, 21}));
}

TEST(GenerateCorpusTest, BoneLengthsConstantAcrossCorpus) {
  ScratchDir dir("bones");
  const Corpus c = generate_corpus(dir.path(), small_config(8, 20, {"wave", "squat", "jack", "punch"}), 5);
  const std::pair<int, int> pairs[] = {{kLeftShoulder, kLeftElbow},  {kLeftElbow, kLeftWrist},
                                       {kRightShoulder, kRightElbow}, {kRightElbow, kRightWrist},
                                       {kLeftShoulder, kRightShoulder}, {kLeftHip, kRightHip}};
  for (const ClipInfo& info : c.clips()) {
    const auto joints = read_all_joints(info.dir / "joints.txt");
    for (const auto& [a, b] : pairs) {
      const float ref = distance(joints[0][a], joints[0][b]);
      for (const Pose& p : joints) EXPECT_NEAR(distance(p[a], p[b]), ref, 0.01f) << info.id;
    }
    for (const Pose& p : joints)
      for (const Point2& q : p) {
        EXPECT_GE(q.x, 0.0f);
        EXPECT_LT(q.x, 96.0f);
        EXPECT_GE(q.y, 0.0f);
        EXPECT_LT(q.y, 96.0f);
      }
  }
}

TEST(GenerateCorpusTest, Errors) {
  ScratchDir dir("generr");
  CorpusConfig cfg = small_config(2, 4);
  EXPECT_THROW(generate_corpus(dir.path(), cfg, 1), ParamError);  // 4 frames <= delta_n + ...
  cfg = small_config(2, 10, {"moonwalk"});
  EXPECT_THROW(generate_corpus(dir.path(), cfg, 1), NotFoundError);
  std::ofstream(dir / "blocker") << "x";
  EXPECT_THROW(generate_corpus(dir / "blocker" / "sub", small_config(2, 10), 1), IoError);
}

TEST(IngestTest, UnannotatedClips) {
  ScratchDir dir("ingest");
  for (const char* id : {"alpha", "beta"}) {
    fs::create_directories(dir / id);
    for (int f = 1; f <= 20; ++f) {
      char name[16];
      std::snprintf(name, sizeof name, "%05d.pgm", f);
      write_pgm(dir / id / name, GrayImage(40, 30, 0.02f * f));
    }
  }
  const Corpus c = ingest_frames(dir.path());
  ASSERT_EQ(c.size(), 2u);
  for (const ClipInfo& info : c.clips()) {
    EXPECT_EQ(info.frame_count, 20);
    EXPECT_EQ(info.first_frame, 1);
    EXPECT_EQ(info.width, 40);
    EXPECT_EQ(info.height, 30);
    EXPECT_FALSE(info.has_joints);
    EXPECT_FALSE(info.label.has_value());
  }
  const VideoClip clip = load_clip(c, "beta");
  EXPECT_FALSE(clip.joints().has_value());
  EXPECT_NEAR(clip.frame(0).pixels[0], 0.02f, 1.0f / 255.0f);
}

TEST(IngestTest, GapsAreListed) {
  ScratchDir dir("gaps");
  fs::create_directories(dir / "c");
  for (int f : {0, 1, 2, 5, 6, 8}) {
    char name[16];
    std::snprintf(name, sizeof name, "%05d.pgm", f);
    write_pgm(dir / "c" / name, GrayImage(8, 8, 0.5f));
  }
  try {
    ingest_frames(dir.path());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("3-4, 7"), std::string::npos) << e.what();
  }
}

TEST(IngestTest, ShortJointsLineNamesClipAndFrame) {
  ScratchDir dir("badjoints");
  generate_corpus(dir.path(), small_config(2, 10), 2);
  const fs::path file = dir / "clip_0001/joints.txt";
  auto joints = read_all_joints(file);
  joints[4].pop_back();
  std::string text;
  for (const Pose& p : joints) text += format_joints_line(p) + "\n";
  std::ofstream(file) << text;
  try {
    ingest_frames(dir.path());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("clip_0001"), std::string::npos) << msg;
    EXPECT_NE(msg.find("frame 4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 5"), std::string::npos) << msg;
    EXPECT_NE(msg.find("got 8 pairs"), std::string::npos) << msg;
  }
}

TEST(IngestTest, RoundTripsGeneratedMetadata) {
  ScratchDir dir("roundtrip");
  const Corpus generated = generate_corpus(dir.path(), small_config(5, 9, {"jack", "punch", "wave"}), 21);
  const Corpus ingested = ingest_frames(dir.path());
  EXPECT_EQ(ingested.clips(), generated.clips());
  for (const ClipInfo& info : generated.clips()) {
    const VideoClip clip = load_clip(ingested, info.id);
    ASSERT_TRUE(clip.joints().has_value());
    EXPECT_EQ(clip.joints()->size(), 9u);
    EXPECT_EQ(clip.frame_count(), 9);
  }
}

TEST(IngestTest, LabelParseError) {
  ScratchDir dir("badlabel");
  generate_corpus(dir.path(), small_config(2, 6), 2);
  std::ofstream(dir / "clip_0000/label.txt") << "one\n";
  EXPECT_THROW(ingest_frames(dir.path()), ParseError);
  EXPECT_THROW(ingest_frames(dir / "nope"), NotFoundError);
}

TEST(PrecomputeFlowsTest, CountsIdempotenceAndRepair) {
  ScratchDir dir("flows");
  const Corpus generated = generate_corpus(dir.path(), small_config(2, 8), 4);
  FlowReport report;
  const Corpus c = precompute_flows(generated, FlowParams{}, 2, &report);
  EXPECT_EQ(report.written, 14);
  EXPECT_TRUE(report.warnings.empty());
  for (const ClipInfo& info : c.clips()) {
    EXPECT_TRUE(info.has_flows);
    int files = 0;
    for (const auto& e : fs::directory_iterator(info.dir / "flow")) files += e.path().extension() == ".flo1";
    EXPECT_EQ(files, info.frame_count - 1);
  }
  EXPECT_EQ(ingest_frames(dir.path()).clips(), c.clips());

  precompute_flows(c, FlowParams{}, 1, &report);
  EXPECT_EQ(report.written, 0);
  EXPECT_EQ(report.skipped, 14);

  fs::resize_file(dir / "clip_0001/flow/00003.flo1", 20);
  precompute_flows(c, FlowParams{}, 1, &report);
  EXPECT_EQ(report.written, 1);
  ASSERT_EQ(report.warnings.size(), 1u);
  EXPECT_NE(report.warnings[0].find("clip_0001"), std::string::npos);
  EXPECT_NO_THROW(read_flo1(dir / "clip_0001/flow/00003.flo1"));
}

TEST(PrecomputeFlowsTest, StaticBackgroundHasNearZeroFlow) {
  ScratchDir dir("static");
  CorpusConfig cfg = small_config(2, 5, {"wave", "jack"});
  const Corpus c = precompute_flows(generate_corpus(dir.path(), cfg, 9), FlowParams{});
  const SkeletonModel model = SkeletonModel::standard();
  for (const ClipInfo& info : c.clips()) {
    const VideoClip clip = load_clip(c, info.id);
    for (int k = 0; k < 4; ++k) {
      // Static region: no temporal change anywhere in a 21x21 window.
      const GrayImage& a = clip.frame(k);
      const GrayImage& b = clip.frame(k + 1);
      const auto oracle = block_match(a, b, 3, 3, 4);
      const FlowField& f = clip.flow(k);
      int checked = 0;
      for (int y = 4; y < 92; ++y)
        for (int x = 4; x < 92; ++x) {
          bool still = true;
          for (int dy = -10; dy <= 10 && still; ++dy)
            for (int dx = -10; dx <= 10 && still; ++dx)
              still = a.clamped(x + dx, y + dy) == b.clamped(x + dx, y + dy);
          if (!still) continue;
          const std::size_t i = f.index(x, y);
          ASSERT_EQ(oracle.u[i], 0.0f);
          ASSERT_EQ(oracle.v[i], 0.0f);
          EXPECT_LT(std::hypot(f.u[i], f.v[i]), 0.3f) << info.id << " flow " << k << " at " << x << "," << y;
          ++checked;
        }
      EXPECT_GT(checked, 1000);
    }
  }
}

TEST(LoadClipTest, LazyFramesAndFlows) {
  ScratchDir dir("load");
  const Corpus c = precompute_flows(generate_corpus(dir.path(), small_config(2, 30), 8), FlowParams{}, 1);
  const VideoClip clip = load_clip(c, "clip_0001");
  EXPECT_EQ(clip.frame_count(), 30);
  EXPECT_EQ(clip.flow_count(), 29);
  EXPECT_EQ(clip.flow(28).width, 96);
  EXPECT_THROW(clip.flow(29), ParamError);
  EXPECT_THROW(load_clip(c, "clip_9999"), NotFoundError);
  EXPECT_EQ(load_clip(ingest_frames(dir.path()), "clip_0000").flow_count(), 29);
}

TEST(LoadClipTest, SquatBoneLengthsWithinHalfPixel) {
  ScratchDir dir("squat");
  const Corpus c = generate_corpus(dir.path(), small_config(2, 30, {"squat"}), 13);
  for (const ClipInfo& info : c.clips()) {
    const VideoClip clip = load_clip(c, info.id);
    // Model lengths: upper arm 13, forearm 12, hip width 14, shoulder width 20.
    for (const Pose& p : *clip.joints()) {
      EXPECT_NEAR(distance(p[kLeftShoulder], p[kLeftElbow]), 13.0f, 0.5f);
      EXPECT_NEAR(distance(p[kRightElbow], p[kRightWrist]), 12.0f, 0.5f);
      EXPECT_NEAR(distance(p[kLeftHip], p[kRightHip]), 14.0f, 0.5f);
      EXPECT_NEAR(distance(p[kLeftShoulder], p[kRightShoulder]), 20.0f, 0.5f);
    }
  }
}

TEST(JointsFormatTest, ParseRejectsGarbage) {
  EXPECT_THROW(parse_joints_line("1,2,3", 2), ParseError);
  EXPECT_THROW(parse_joints_line("1,2,x,4", 2), ParseError);
  EXPECT_THROW(parse_joints_line("1,,3,4", 2), ParseError);
  const Pose p = parse_joints_line(" 1.5, 2 ,3,4.25", 2);
  EXPECT_FLOAT_EQ(p[1].y, 4.25f);
  EXPECT_EQ(format_joints_line(p), "1.500,2.000,3.000,4.250");
}
