#include "pfm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "pfm/errors.hpp"

namespace fs = std::filesystem;

namespace pfm {

namespace {

constexpr int kReferenceSize = 96;  // skeleton lengths are authored for this frame size
constexpr float kFigureIntensity = 0.92f;

std::string frame_name(int number) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d", number);
  return buf;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::optional<std::string> read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

float segment_distance(Point2 p, Point2 a, Point2 b) {
  const float dx = b.x - a.x, dy = b.y - a.y;
  const float len2 = dx * dx + dy * dy;
  float t = len2 > 0.0f ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0f;
  t = std::clamp(t, 0.0f, 1.0f);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

bool inside(const Pose& pose, int w, int h) {
  return std::all_of(pose.begin(), pose.end(), [&](Point2 p) {
    return std::isfinite(p.x) && std::isfinite(p.y) && p.x >= 0.0f && p.y >= 0.0f && p.x < w && p.y < h;
  });
}

// Numbered frame files of a clip directory: number -> path.
std::map<int, fs::path> numbered_frames(const fs::path& dir) {
  std::map<int, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".pgm") continue;
    const std::string stem = entry.path().stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](unsigned char c) { return std::isdigit(c); }))
      continue;
    out[std::stoi(stem)] = entry.path();
  }
  return out;
}

std::string describe_gaps(const std::vector<int>& missing) {
  std::string s;
  for (std::size_t i = 0; i < missing.size();) {
    std::size_t j = i;
    while (j + 1 < missing.size() && missing[j + 1] == missing[j] + 1) ++j;
    if (!s.empty()) s += ", ";
    s += std::to_string(missing[i]);
    if (j > i) s += "-" + std::to_string(missing[j]);
    i = j + 1;
  }
  return s;
}

fs::path frames_dir(const fs::path& clip_dir) {
  return fs::is_directory(clip_dir / "frames") ? clip_dir / "frames" : clip_dir;
}

std::vector<Pose> read_joints(const fs::path& path, const ClipInfo& info) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Pose> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      poses.push_back(parse_joints_line(line, kNumJoints));
    } catch (const ParseError& e) {
      throw ParseError("clip '" + info.id + "' frame " + std::to_string(line_no - 1) + " (" + path.string() +
                       " line " + std::to_string(line_no) + "): " + e.what());
    }
    if (!inside(poses.back(), info.width, info.height))
      throw DataError("clip '" + info.id + "' frame " + std::to_string(line_no - 1) + ": joint outside the " +
                      std::to_string(info.width) + "x" + std::to_string(info.height) + " frame");
  }
  if (static_cast<int>(poses.size()) != info.frame_count)
    throw DataError("clip '" + info.id + "': " + std::to_string(poses.size()) + " joint records for " +
                    std::to_string(info.frame_count) + " frames");
  return poses;
}

}  // namespace

Corpus::Corpus(fs::path root, std::vector<ClipInfo> clips) : root_(std::move(root)), clips_(std::move(clips)) {}

const ClipInfo& Corpus::info(const std::string& id) const {
  for (const ClipInfo& c : clips_)
    if (c.id == id) return c;
  throw NotFoundError("clip '" + id + "' is not in the corpus at " + root_.string());
}

Corpus Corpus::with_flows(const std::vector<std::string>& ids) const {
  std::vector<ClipInfo> clips = clips_;
  const std::set<std::string> wanted(ids.begin(), ids.end());
  for (ClipInfo& c : clips)
    if (wanted.count(c.id)) c.has_flows = true;
  return Corpus(root_, std::move(clips));
}

VideoClip::VideoClip(ClipInfo info)
    : info_(std::move(info)),
      frames_(static_cast<std::size_t>(info_.frame_count)),
      flows_(static_cast<std::size_t>(std::max(info_.frame_count - 1, 0))) {
  if (info_.has_joints) joints_ = read_joints(info_.dir / "joints.txt", info_);
}

VideoClip::VideoClip(ClipInfo info, std::vector<GrayImage> frames, std::vector<FlowField> flows,
                     std::optional<std::vector<Pose>> joints)
    : info_(std::move(info)), joints_(std::move(joints)) {
  info_.frame_count = static_cast<int>(frames.size());
  if (frames.empty()) throw DataError("clip '" + info_.id + "' has no frames");
  info_.width = frames[0].width;
  info_.height = frames[0].height;
  info_.has_joints = joints_.has_value();
  info_.has_flows = !flows.empty();
  if (info_.has_flows && flows.size() + 1 != frames.size())
    throw DataError("clip '" + info_.id + "': expected " + std::to_string(frames.size() - 1) + " flows, got " +
                    std::to_string(flows.size()));
  if (joints_ && joints_->size() != frames.size())
    throw DataError("clip '" + info_.id + "': joints do not cover every frame");
  for (GrayImage& f : frames) {
    if (f.width != info_.width || f.height != info_.height) throw DataError("clip '" + info_.id + "': ragged frames");
    frames_.emplace_back(std::move(f));
  }
  for (FlowField& f : flows) {
    if (f.width != info_.width || f.height != info_.height)
      throw DataError("clip '" + info_.id + "': flow size differs from frame size");
    flows_.emplace_back(std::move(f));
  }
  if (flows_.empty()) flows_.resize(static_cast<std::size_t>(info_.frame_count - 1));
}

fs::path VideoClip::frame_path(int index) const {
  return frames_dir(info_.dir) / (frame_name(info_.first_frame + index) + ".pgm");
}

fs::path VideoClip::flow_path(int index) const { return info_.dir / "flow" / (frame_name(index) + ".flo1"); }

const GrayImage& VideoClip::frame(int index) const {
  if (index < 0 || index >= info_.frame_count)
    throw ParamError("clip '" + info_.id + "': frame " + std::to_string(index) + " out of range");
  auto& slot = frames_[index];
  if (!slot) {
    GrayImage img = read_pgm(frame_path(index));
    if (img.width != info_.width || img.height != info_.height)
      throw DataError("clip '" + info_.id + "': frame " + std::to_string(index) + " has a different size");
    slot = std::move(img);
  }
  return *slot;
}

const FlowField& VideoClip::flow(int index) const {
  if (!info_.has_flows) throw NotFoundError("clip '" + info_.id + "' has no precomputed flows");
  if (index < 0 || index >= info_.frame_count - 1)
    throw ParamError("clip '" + info_.id + "': flow " + std::to_string(index) + " out of range");
  auto& slot = flows_[index];
  if (!slot) {
    FlowField f = read_flo1(flow_path(index));
    if (f.width != info_.width || f.height != info_.height)
      throw IntegrityError("clip '" + info_.id + "': flow " + std::to_string(index) + " does not match frame size");
    slot = std::move(f);
  }
  return *slot;
}

void VideoClip::preload() const {
  for (int i = 0; i < info_.frame_count; ++i) frame(i);
  for (int i = 0; i < flow_count(); ++i) flow(i);
}

SkeletonModel::Placement ClipMotion::at(const SkeletonModel& model, const ActionScript& script, int frame) const {
  const float t = static_cast<float>(frame);
  const Point2 pelvis{start.x + velocity_x * t, start.y + script.bob(t, clip_phase, amplitude_scale)};
  return model.place(pelvis, script.angles(model, t, clip_phase, amplitude_scale));
}

GrayImage make_background(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  GrayImage noise(size, size);
  for (float& p : noise.pixels) p = u(rng);
  GrayImage bg = gaussian_blur(noise, 1.0f);
  const auto [lo, hi] = std::minmax_element(bg.pixels.begin(), bg.pixels.end());
  const float mn = *lo, range = std::max(*hi - *lo, 1e-6f);
  for (float& p : bg.pixels) p = 0.1f + 0.5f * (p - mn) / range;
  return bg;
}

GrayImage render_figure(const GrayImage& background, const SkeletonModel& model,
                        const SkeletonModel::Placement& placement) {
  struct Segment {
    Point2 a, b;
    float half_width;
  };
  std::vector<Segment> segments;
  const int nose_bone = model.bone_index("neck_nose");
  const int spine = model.bone_index("spine");
  for (std::size_t i = 0; i < model.bones.size(); ++i) {
    if (static_cast<int>(i) == nose_bone) continue;
    const Bone& b = model.bones[i];
    const Point2 start = b.parent < 0 ? placement.pelvis : placement.bone_ends[b.parent];
    const float hw = static_cast<int>(i) == spine ? 1.75f * model.limb_half_width : model.limb_half_width;
    segments.push_back({start, placement.bone_ends[i], hw});
  }
  const Point2 head = placement.bone_ends[nose_bone];

  GrayImage out = background;
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const Point2 p{static_cast<float>(x), static_cast<float>(y)};
      float cover = std::clamp(model.head_radius + 0.5f - distance(p, head), 0.0f, 1.0f);
      for (const Segment& s : segments) {
        if (cover >= 1.0f) break;
        cover = std::max(cover, std::clamp(s.half_width + 0.5f - segment_distance(p, s.a, s.b), 0.0f, 1.0f));
      }
      float& v = out.at(x, y);
      v = v * (1.0f - cover) + kFigureIntensity * cover;
    }
  return out;
}

std::string format_joints_line(const Pose& pose) {
  std::string s;
  char buf[64];
  for (std::size_t i = 0; i < pose.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.3f,%.3f", i ? "," : "", pose[i].x, pose[i].y);
    s += buf;
  }
  return s;
}

Pose parse_joints_line(const std::string& line, int expected_joints) {
  std::vector<float> values;
  std::string token;
  std::istringstream ss(line);
  while (std::getline(ss, token, ',')) {
    const auto b = token.find_first_not_of(" \t\r");
    if (b == std::string::npos) throw ParseError("empty field in joints record");
    const auto e = token.find_last_not_of(" \t\r");
    token = token.substr(b, e - b + 1);
    char* end = nullptr;
    const float v = std::strtof(token.c_str(), &end);
    if (end != token.c_str() + token.size()) throw ParseError("malformed number '" + token + "' in joints record");
    values.push_back(v);
  }
  if (values.size() != static_cast<std::size_t>(2 * expected_joints))
    throw ParseError("expected " + std::to_string(expected_joints) + " x,y pairs, got " +
                     (values.size() % 2 ? std::to_string(values.size()) + " values"
                                        : std::to_string(values.size() / 2) + " pairs"));
  Pose pose(expected_joints);
  for (int k = 0; k < expected_joints; ++k) pose[k] = {values[2 * k], values[2 * k + 1]};
  return pose;
}

Corpus generate_corpus(const fs::path& root, const CorpusConfig& config, std::uint64_t seed) {
  if (config.num_clips <= 0) throw ParamError("num_clips must be positive");
  if (config.frames_per_clip <= config.delta_n)
    throw ParamError("frames_per_clip (" + std::to_string(config.frames_per_clip) + ") must exceed delta_n (" +
                     std::to_string(config.delta_n) + ")");
  if (config.frame_size < 48) throw ParamError("frame_size must be at least 48");
  if (config.actions.empty()) throw ParamError("at least one action is required");

  const SkeletonModel model = SkeletonModel::standard();
  const std::vector<ActionScript> library = standard_actions(model);
  std::vector<ActionScript> scripts;
  for (const std::string& name : config.actions) scripts.push_back(find_action(library, name));

  ensure_directory(root);
  const float scale = static_cast<float>(config.frame_size) / kReferenceSize;
  SkeletonModel drawn = model;
  drawn.head_radius *= scale;
  drawn.limb_half_width *= scale;
  const GrayImage background = make_background(config.frame_size, mix_seed(seed, 0));
  const JitterRanges& j = config.jitter;

  std::vector<ClipInfo> clips(config.num_clips);
  parallel_for(config.num_clips, config.workers, [&](int i) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i) + 1));
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    auto sym = [&](float r) { return r * (2.0f * u(rng) - 1.0f); };
    ClipMotion m;
    m.action = i % static_cast<int>(scripts.size());
    m.clip_phase = j.phase * u(rng);
    m.amplitude_scale = 1.0f + sym(j.amplitude);
    m.velocity_x = sym(j.velocity);
    const float drift = m.velocity_x * 0.5f * static_cast<float>(config.frames_per_clip - 1);
    m.start = {48.0f + sym(j.position) - drift, 56.0f + sym(j.position)};

    char id[32];
    std::snprintf(id, sizeof id, "clip_%04d", i);
    ClipInfo info;
    info.id = id;
    info.dir = root / id;
    info.frame_count = config.frames_per_clip;
    info.width = info.height = config.frame_size;
    info.label = m.action;
    info.has_joints = true;
    ensure_directory(info.dir / "frames");

    std::string joints;
    for (int f = 0; f < config.frames_per_clip; ++f) {
      SkeletonModel::Placement p = m.at(model, scripts[m.action], f);
      auto sc = [&](Point2& q) { q = {q.x * scale, q.y * scale}; };
      sc(p.pelvis);
      for (Point2& q : p.bone_ends) sc(q);
      for (Point2& q : p.joints) sc(q);
      if (!inside(p.joints, config.frame_size, config.frame_size))
        throw DataError("clip '" + info.id + "' frame " + std::to_string(f) + ": figure leaves the frame");
      write_pgm(info.dir / "frames" / (frame_name(f) + ".pgm"), render_figure(background, drawn, p));
      joints += format_joints_line(p.joints) + "\n";
    }
    write_text(info.dir / "joints.txt", joints);
    write_text(info.dir / "label.txt", std::to_string(m.action) + "\n");
    clips[i] = std::move(info);
  });

  std::string index, actions;
  for (const ClipInfo& c : clips) index += c.id + "\n";
  for (const std::string& a : config.actions) actions += a + "\n";
  write_text(root / "index.txt", index);
  write_text(root / "actions.txt", actions);
  return Corpus(root, std::move(clips));
}

Corpus ingest_frames(const fs::path& root) {
  if (!fs::is_directory(root)) throw NotFoundError("corpus directory " + root.string() + " does not exist");
  std::vector<std::string> ids;
  if (auto text = read_text(root / "index.txt")) {
    std::istringstream ss(*text);
    std::string line;
    while (std::getline(ss, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (!fs::is_directory(root / line)) throw NotFoundError("index lists missing clip directory '" + line + "'");
      ids.push_back(line);
    }
  } else {
    for (const auto& entry : fs::directory_iterator(root))
      if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    std::sort(ids.begin(), ids.end());
  }

  std::vector<ClipInfo> clips;
  for (const std::string& id : ids) {
    ClipInfo info;
    info.id = id;
    info.dir = root / id;
    const auto frames = numbered_frames(frames_dir(info.dir));
    if (frames.empty()) continue;  // not a clip directory
    const int first = frames.begin()->first, last = frames.rbegin()->first;
    std::vector<int> missing;
    for (int n = first; n <= last; ++n)
      if (!frames.count(n)) missing.push_back(n);
    if (!missing.empty())
      throw DataError("clip '" + id + "': non-contiguous frame numbering, missing " + describe_gaps(missing));
    info.first_frame = first;
    info.frame_count = last - first + 1;
    const GrayImage probe = read_pgm(frames.begin()->second);
    info.width = probe.width;
    info.height = probe.height;

    if (auto text = read_text(info.dir / "label.txt")) {
      std::istringstream ss(*text);
      int label = 0;
      std::string rest;
      if (!(ss >> label) || (ss >> rest) || label < 0)
        throw ParseError("clip '" + id + "': label.txt must hold one non-negative integer");
      info.label = label;
    }
    info.has_joints = fs::is_regular_file(info.dir / "joints.txt");
    if (info.has_joints) read_joints(info.dir / "joints.txt", info);  // validate now

    bool flows = fs::is_directory(info.dir / "flow") && info.frame_count > 1;
    for (int k = 0; flows && k < info.frame_count - 1; ++k)
      flows = fs::is_regular_file(info.dir / "flow" / (frame_name(k) + ".flo1"));
    info.has_flows = flows;
    clips.push_back(std::move(info));
  }
  return Corpus(root, std::move(clips));
}

Corpus precompute_flows(const Corpus& corpus, const FlowParams& params, int workers, FlowReport* report) {
  const auto& clips = corpus.clips();
  std::vector<FlowReport> per_clip(clips.size());
  parallel_for(static_cast<int>(clips.size()), workers, [&](int i) {
    ClipInfo info = clips[i];
    info.has_flows = false;
    info.has_joints = false;  // joints are irrelevant here
    const VideoClip clip(info);
    FlowReport& r = per_clip[i];
    ensure_directory(info.dir / "flow");
    for (int k = 0; k + 1 < info.frame_count; ++k) {
      const fs::path path = clip.flow_path(k);
      if (fs::exists(path)) {
        try {
          const FlowField existing = read_flo1(path);
          if (existing.width == info.width && existing.height == info.height) {
            ++r.skipped;
            continue;
          }
          r.warnings.push_back("clip '" + info.id + "' flow " + std::to_string(k) +
                               ": size mismatch, recomputed");
        } catch (const IntegrityError& e) {
          r.warnings.push_back("clip '" + info.id + "' flow " + std::to_string(k) + ": " + e.what() +
                               ", recomputed");
        }
      }
      const FlowField f = estimate_flow(clip.frame(k), clip.frame(k + 1), params);
      const fs::path tmp = path.string() + ".tmp";
      write_flo1(tmp, f);
      fs::rename(tmp, path);
      ++r.written;
    }
  });
  std::vector<std::string> ids;
  FlowReport total;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    total.written += per_clip[i].written;
    total.skipped += per_clip[i].skipped;
    total.warnings.insert(total.warnings.end(), per_clip[i].warnings.begin(), per_clip[i].warnings.end());
    if (clips[i].frame_count > 1) ids.push_back(clips[i].id);
  }
  if (report) *report = std::move(total);
  return corpus.with_flows(ids);
}

VideoClip load_clip(const Corpus& corpus, const std::string& clip_id) { return VideoClip(corpus.info(clip_id)); }

std::vector<VideoClip> load_all(const Corpus& corpus, int workers) {
  std::vector<VideoClip> clips(corpus.size());
  parallel_for(static_cast<int>(corpus.size()), workers, [&](int i) {
    clips[i] = VideoClip(corpus.clips()[i]);
    clips[i].preload();
  });
  return clips;
}

}  // namespace pfm
