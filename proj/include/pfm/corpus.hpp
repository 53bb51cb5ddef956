#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pfm/flow.hpp"
#include "pfm/geometry.hpp"
#include "pfm/image.hpp"
#include "pfm/parallel.hpp"
#include "pfm/skeleton.hpp"

namespace pfm {

struct JitterRanges {
  float phase = 6.2831853f;  // clip phase drawn from [0, phase)
  float amplitude = 0.2f;    // amplitude scale drawn from [1-a, 1+a]
  float position = 5.0f;     // pelvis offset drawn from [-p, p] on each axis
  float velocity = 0.15f;    // horizontal drift drawn from [-v, v] px/frame
};

struct CorpusConfig {
  int num_clips = 40;
  int frames_per_clip = 30;
  int frame_size = 96;
  int delta_n = 4;  // generation refuses clips too short for blocks of this length
  std::vector<std::string> actions = {"wave", "squat", "jack", "punch"};
  JitterRanges jitter;
  int workers = 1;
};

struct ClipInfo {
  std::string id;
  std::filesystem::path dir;
  int frame_count = 0;
  int first_frame = 0;  // number of the first frame file
  int width = 0;
  int height = 0;
  std::optional<int> label;
  bool has_joints = false;
  bool has_flows = false;

  bool operator==(const ClipInfo&) const = default;
};

// Immutable index of clips on disk.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::filesystem::path root, std::vector<ClipInfo> clips);

  const std::filesystem::path& root() const { return root_; }
  const std::vector<ClipInfo>& clips() const { return clips_; }
  std::size_t size() const { return clips_.size(); }
  const ClipInfo& info(const std::string& id) const;
  // Copy of the index with flows marked present for the given clips.
  Corpus with_flows(const std::vector<std::string>& ids) const;

 private:
  std::filesystem::path root_;
  std::vector<ClipInfo> clips_;
};

// Frames and flows are read on first access; joints are parsed on load.
class VideoClip {
 public:
  VideoClip() = default;
  explicit VideoClip(ClipInfo info);
  // Fully in-memory clip (nothing is read from disk).
  VideoClip(ClipInfo info, std::vector<GrayImage> frames, std::vector<FlowField> flows,
            std::optional<std::vector<Pose>> joints = std::nullopt);

  const ClipInfo& info() const { return info_; }
  const std::string& id() const { return info_.id; }
  int frame_count() const { return info_.frame_count; }
  int flow_count() const { return info_.has_flows ? info_.frame_count - 1 : 0; }
  const std::optional<std::vector<Pose>>& joints() const { return joints_; }

  const GrayImage& frame(int index) const;
  // Flow from frame `index` to frame `index + 1`.
  const FlowField& flow(int index) const;
  std::filesystem::path frame_path(int index) const;
  std::filesystem::path flow_path(int index) const;
  // Load everything now (after this the clip is safe to share across threads).
  void preload() const;

 private:
  ClipInfo info_;
  std::optional<std::vector<Pose>> joints_;
  mutable std::vector<std::optional<GrayImage>> frames_;
  mutable std::vector<std::optional<FlowField>> flows_;
};

// Pelvis trajectory and jitter of one generated clip.
struct ClipMotion {
  int action = 0;
  float clip_phase = 0.0f;
  float amplitude_scale = 1.0f;
  Point2 start{};
  float velocity_x = 0.0f;

  SkeletonModel::Placement at(const SkeletonModel& model, const ActionScript& script, int frame) const;
};

GrayImage make_background(int size, std::uint64_t seed);
// Anti-aliased figure composited over the background.
GrayImage render_figure(const GrayImage& background, const SkeletonModel& model,
                        const SkeletonModel::Placement& placement);

Corpus generate_corpus(const std::filesystem::path& root, const CorpusConfig& config, std::uint64_t seed);
Corpus ingest_frames(const std::filesystem::path& root);

std::string format_joints_line(const Pose& pose);
Pose parse_joints_line(const std::string& line, int expected_joints);

struct FlowReport {
  int written = 0;
  int skipped = 0;
  std::vector<std::string> warnings;
};
// Writes the missing or corrupt flow files of every clip and returns the
// updated index.
Corpus precompute_flows(const Corpus& corpus, const FlowParams& params, int workers = 1,
                        FlowReport* report = nullptr);

VideoClip load_clip(const Corpus& corpus, const std::string& clip_id);
// Every clip of the corpus with frames and flows already in memory.
std::vector<VideoClip> load_all(const Corpus& corpus, int workers = 1);

}  // namespace pfm
