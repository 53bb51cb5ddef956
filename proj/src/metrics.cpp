#include "pfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pfm/errors.hpp"
#include "pfm/graph.hpp"

namespace pfm {

SkeletonEval SkeletonEval::standard() {
  SkeletonEval s;
  s.limbs = {
      {"l_upper_arm", "upper_arms", kLeftShoulder, kLeftElbow},
      {"r_upper_arm", "upper_arms", kRightShoulder, kRightElbow},
      {"l_lower_arm", "lower_arms", kLeftElbow, kLeftWrist},
      {"r_lower_arm", "lower_arms", kRightElbow, kRightWrist},
      {"l_torso", "torso", kLeftShoulder, kLeftHip},
      {"r_torso", "torso", kRightShoulder, kRightHip},
  };
  return s;
}

void SkeletonEval::validate() const {
  if (!(alpha > 0.0f && alpha <= 1.0f)) throw ParamError("PCP alpha must lie in (0, 1]");
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) throw ParamError("PDJ thresholds must be sorted ascending");
  auto check = [this](int j) {
    if (j < 0 || j >= num_joints) throw ParamError("joint index " + std::to_string(j) + " out of range");
  };
  for (const Limb& l : limbs) {
    check(l.a);
    check(l.b);
  }
  check(torso_a);
  check(torso_b);
}

Point2 decode_heatmap(std::span<const float> map, int width, int height, int top_k) {
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (map.size() != n) throw ShapeError("heatmap size does not match its dimensions");
  if (top_k <= 0 || static_cast<std::size_t>(top_k) > n) throw ParamError("top_k must lie in [1, H*W]");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + top_k, order.end(), [&](int a, int b) {
    if (map[a] != map[b]) return map[a] > map[b];
    return a < b;
  });
  double sx = 0.0, sy = 0.0;
  for (int i = 0; i < top_k; ++i) {
    sx += order[i] % width;
    sy += order[i] / width;
  }
  return {static_cast<float>(sx / top_k), static_cast<float>(sy / top_k)};
}

double PcpResult::accuracy(const std::string& group) const {
  auto it = total.find(group);
  if (it == total.end() || it->second == 0) return 0.0;
  return static_cast<double>(correct.at(group)) / it->second;
}

void PcpResult::merge(const PcpResult& other) {
  for (const auto& [g, n] : other.total) total[g] += n;
  for (const auto& [g, n] : other.correct) correct[g] += n;
  degenerate += other.degenerate;
}

namespace {

void check_pose_pair(const Pose& pred, const Pose& gt, const SkeletonEval& skel) {
  if (static_cast<int>(pred.size()) != skel.num_joints || static_cast<int>(gt.size()) != skel.num_joints)
    throw ShapeError("expected " + std::to_string(skel.num_joints) + " joints, got " + std::to_string(pred.size()) +
                     " predicted and " + std::to_string(gt.size()) + " ground truth");
}

void check_sets(std::size_t pred, std::size_t gt) {
  if (pred != gt) throw ShapeError("prediction and ground-truth sets differ in length");
}

}  // namespace

PcpResult strict_pcp(const Pose& pred, const Pose& gt, const SkeletonEval& skel) {
  check_pose_pair(pred, gt, skel);
  PcpResult r;
  for (const Limb& l : skel.limbs) {
    r.total.try_emplace(l.group, 0);
    r.correct.try_emplace(l.group, 0);
    const double length = distance(gt[l.a], gt[l.b]);
    if (length <= 0.0) {
      ++r.degenerate;
      continue;
    }
    const double tol = skel.alpha * length;
    ++r.total[l.group];
    if (distance(pred[l.a], gt[l.a]) <= tol && distance(pred[l.b], gt[l.b]) <= tol) ++r.correct[l.group];
  }
  return r;
}

PcpResult strict_pcp(const std::vector<Pose>& pred, const std::vector<Pose>& gt, const SkeletonEval& skel) {
  check_sets(pred.size(), gt.size());
  PcpResult r;
  for (std::size_t i = 0; i < pred.size(); ++i) r.merge(strict_pcp(pred[i], gt[i], skel));
  return r;
}

double PdjResult::rate(int joint, std::size_t threshold_index) const {
  const int counted = frames - skipped;
  if (counted <= 0) return 0.0;
  return static_cast<double>(detected.at(joint).at(threshold_index)) / counted;
}

double PdjResult::mean_rate(std::size_t threshold_index) const {
  if (detected.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t j = 0; j < detected.size(); ++j) s += rate(static_cast<int>(j), threshold_index);
  return s / detected.size();
}

PdjResult pdj(const std::vector<Pose>& pred, const std::vector<Pose>& gt, const SkeletonEval& skel) {
  check_sets(pred.size(), gt.size());
  PdjResult r;
  r.thresholds = skel.thresholds;
  r.detected.assign(skel.num_joints, std::vector<int>(skel.thresholds.size(), 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check_pose_pair(pred[i], gt[i], skel);
    ++r.frames;
    const double torso = distance(gt[i][skel.torso_a], gt[i][skel.torso_b]);
    if (torso <= 0.0) {
      ++r.skipped;
      continue;
    }
    for (int j = 0; j < skel.num_joints; ++j) {
      const double err = distance(pred[i][j], gt[i][j]);
      for (std::size_t t = 0; t < skel.thresholds.size(); ++t)
        if (err <= skel.thresholds[t] * torso) ++r.detected[j][t];
    }
  }
  return r;
}

PdjResult pdj(const Pose& pred, const Pose& gt, const SkeletonEval& skel) {
  return pdj(std::vector<Pose>{pred}, std::vector<Pose>{gt}, skel);
}

double accuracy_from_scores(const Tensor& scores, std::span<const int> labels) {
  if (scores.rank() != 2 || scores.dim(0) != static_cast<int>(labels.size()))
    throw ShapeError("scores must be N x classes with one label per row");
  const int n = scores.dim(0), c = scores.dim(1);
  if (n == 0) return 0.0;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const float* row = scores.data().data() + static_cast<std::size_t>(i) * c;
    const int arg = static_cast<int>(std::max_element(row, row + c) - row);
    if (arg == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / n;
}

double binary_accuracy(JointModel& model, const std::vector<BatchTensors>& batches) {
  std::size_t hits = 0, total = 0;
  for (const BatchTensors& b : batches) {
    Graph g;
    Var scores = model.forward(g, g.input(b.patch_a), g.input(b.patch_b), g.input(b.flow_block));
    const double acc = accuracy_from_scores(g.value(scores), b.labels);
    hits += static_cast<std::size_t>(std::lround(acc * b.labels.size()));
    total += b.labels.size();
  }
  if (total == 0) throw DataError("no evaluation samples");
  return static_cast<double>(hits) / total;
}

namespace {

std::vector<int> uniform_frames(int frame_count, int num_frames) {
  std::vector<int> out(num_frames);
  for (int i = 0; i < num_frames; ++i)
    out[i] = num_frames == 1 ? (frame_count - 1) / 2
                             : static_cast<int>(std::lround(static_cast<double>(i) * (frame_count - 1) / (num_frames - 1)));
  return out;
}

}  // namespace

ActionPrediction eval_action_video(const ScoreFn& model, const VideoClip& clip, const ActionProtocol& protocol) {
  if (clip.frame_count() < 1) throw DataError("clip " + clip.id() + " has no frames");
  if (protocol.num_frames < 1) throw ParamError("num_frames must be positive");
  const int s = protocol.crop_size;
  const int per_frame = (protocol.corners ? 5 : 1) * (protocol.flips ? 2 : 1);
  const int total = protocol.samples_per_video();
  ActionPrediction result;
  std::vector<double> sums;
  for (int f : uniform_frames(clip.frame_count(), protocol.num_frames)) {
    const GrayImage& frame = clip.frame(f);
    if (frame.width < s || frame.height < s) throw ShapeError("frame smaller than the action crop");
    std::vector<std::pair<int, int>> origins = {{(frame.width - s) / 2, (frame.height - s) / 2}};
    if (protocol.corners) {
      origins.push_back({0, 0});
      origins.push_back({frame.width - s, 0});
      origins.push_back({0, frame.height - s});
      origins.push_back({frame.width - s, frame.height - s});
    }
    Tensor batch({per_frame, protocol.channels, s, s});
    const std::size_t stride = static_cast<std::size_t>(protocol.channels) * s * s;
    int row = 0;
    for (auto [x, y] : origins) {
      GrayImage c = crop(frame, x, y, s, s);
      Tensor p = crop_patch(c, 0, 0, s, protocol.channels);
      std::copy(p.data().begin(), p.data().end(), batch.data().begin() + row++ * stride);
      if (protocol.flips) {
        Tensor q = crop_patch(hflip(c), 0, 0, s, protocol.channels);
        std::copy(q.data().begin(), q.data().end(), batch.data().begin() + row++ * stride);
      }
    }
    Tensor scores = model(batch);
    if (scores.rank() != 2 || scores.dim(0) != per_frame) throw ShapeError("action model returned unexpected scores");
    const int classes = scores.dim(1);
    if (sums.empty()) sums.assign(classes, 0.0);
    for (int i = 0; i < per_frame; ++i) {
      const float* r = scores.data().data() + static_cast<std::size_t>(i) * classes;
      const float mx = *std::max_element(r, r + classes);
      double z = 0.0;
      for (int k = 0; k < classes; ++k) z += std::exp(static_cast<double>(r[k] - mx));
      for (int k = 0; k < classes; ++k) sums[k] += std::exp(static_cast<double>(r[k] - mx)) / z;
    }
    result.samples += per_frame;
  }
  if (result.samples != total) throw StateError("action protocol sample count mismatch");
  for (double& v : sums) v /= result.samples;
  result.mean_probabilities = sums;
  result.label = static_cast<int>(std::max_element(sums.begin(), sums.end()) - sums.begin());
  return result;
}

ScoreFn score_fn(ActionModel& model) {
  return [&model](const Tensor& images) {
    Graph g;
    return g.value(model.forward(g, g.input(images)));
  };
}

ActionEvaluation evaluate_action(const ScoreFn& model, const std::vector<VideoClip>& clips,
                                 const std::vector<int>& clip_indices, const ActionProtocol& protocol) {
  ActionEvaluation ev;
  for (int i : clip_indices) {
    const VideoClip& clip = clips.at(i);
    if (!clip.info().label) throw DataError("clip " + clip.id() + " has no action label");
    ev.correct += eval_action_video(model, clip, protocol).label == *clip.info().label ? 1 : 0;
    ++ev.total;
  }
  return ev;
}

std::vector<std::vector<float>> appearance_features(const Network& net, ParamSet& params,
                                                    const std::vector<Tensor>& images) {
  std::vector<std::vector<float>> out;
  out.reserve(images.size());
  for (const Tensor& img : images) {
    Graph g;
    const Tensor& f = g.value(net.forward(g, params, g.input(img)));
    out.emplace_back(f.data().begin(), f.data().end());
  }
  return out;
}

double normalized_pose_distance(const Pose& a, const Pose& b, const SkeletonEval& skel) {
  check_pose_pair(a, b, skel);
  auto normalise = [&](const Pose& p) {
    const double d = distance(p[skel.torso_a], p[skel.torso_b]);
    if (d <= 0.0) throw DataError("zero torso diameter");
    const float cx = (p[skel.torso_a].x + p[skel.torso_b].x) / 2, cy = (p[skel.torso_a].y + p[skel.torso_b].y) / 2;
    Pose out(p.size());
    for (std::size_t j = 0; j < p.size(); ++j)
      out[j] = {static_cast<float>((p[j].x - cx) / d), static_cast<float>((p[j].y - cy) / d)};
    return out;
  };
  const Pose na = normalise(a), nb = normalise(b);
  double s = 0.0;
  for (std::size_t j = 0; j < na.size(); ++j) s += distance(na[j], nb[j]);
  return s / na.size();
}

double paired_permutation_p(const std::vector<double>& differences, int permutations, std::mt19937_64& rng) {
  if (differences.empty()) throw DataError("no paired differences");
  if (permutations < 1) throw ParamError("permutations must be positive");
  const double n = static_cast<double>(differences.size());
  const double observed = std::abs(std::accumulate(differences.begin(), differences.end(), 0.0) / n);
  std::bernoulli_distribution coin(0.5);
  int extreme = 0;
  for (int p = 0; p < permutations; ++p) {
    double s = 0.0;
    for (double d : differences) s += coin(rng) ? d : -d;
    if (std::abs(s / n) >= observed - 1e-12) ++extreme;
  }
  return (1.0 + extreme) / (1.0 + permutations);
}

NnProbeReport nn_probe(const Network& appearance, ParamSet& params, const std::vector<VideoClip>& clips,
                       const NnProbeConfig& config, std::mt19937_64& rng) {
  if (config.num_queries < 1 || config.frame_stride < 1) throw ParamError("nn probe needs positive queries and stride");
  const SkeletonEval skel = SkeletonEval::standard();
  struct Entry {
    int clip;
    Pose joints;
  };
  std::vector<Entry> pool;
  std::vector<Tensor> images;
  for (std::size_t c = 0; c < clips.size(); ++c) {
    const auto& joints = clips[c].joints();
    if (!joints) throw DataError("probe clip " + clips[c].id() + " has no joint annotations");
    for (int f = 0; f < clips[c].frame_count(); f += config.frame_stride) {
      const Pose& p = (*joints)[f];
      const GrayImage& frame = clips[c].frame(f);
      const int s = config.crop_size;
      if (frame.width < s || frame.height < s) throw ShapeError("frame smaller than the probe crop");
      // Crop centred on the torso so figure position does not drive retrieval.
      float cx = 0.0f, cy = 0.0f;
      for (int j : {int(kLeftShoulder), int(kRightShoulder), int(kLeftHip), int(kRightHip)}) {
        cx += p[j].x / 4;
        cy += p[j].y / 4;
      }
      const int x0 = std::clamp(static_cast<int>(std::lround(cx - s / 2.0f)), 0, frame.width - s);
      const int y0 = std::clamp(static_cast<int>(std::lround(cy - s / 2.0f)), 0, frame.height - s);
      images.push_back(crop_patch(frame, x0, y0, s, config.channels));
      pool.push_back({static_cast<int>(c), p});
    }
  }
  if (pool.size() < 2) throw DataError("probe pool too small");
  const auto features = appearance_features(appearance, params, images);
  auto feature_dist = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t k = 0; k < features[a].size(); ++k) {
      const double d = features[a][k] - features[b][k];
      s += d * d;
    }
    return s;
  };

  NnProbeReport report;
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<double> diffs;
  for (int q = 0; q < config.num_queries; ++q) {
    const std::size_t query = pick(rng);
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (pool[i].clip != pool[query].clip) candidates.push_back(i);
    if (candidates.empty()) throw DataError("probe needs frames from at least two clips");
    std::size_t best = candidates.front();
    double best_d = feature_dist(query, best);
    for (std::size_t i : candidates) {
      const double d = feature_dist(query, i);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    std::uniform_int_distribution<std::size_t> other(0, candidates.size() - 1);
    const std::size_t partner = candidates[other(rng)];
    const double nn = normalized_pose_distance(pool[query].joints, pool[best].joints, skel);
    const double rnd = normalized_pose_distance(pool[query].joints, pool[partner].joints, skel);
    report.neighbor_distances.push_back(nn);
    report.random_distances.push_back(rnd);
    diffs.push_back(rnd - nn);
  }
  report.queries = config.num_queries;
  report.neighbor_distance =
      std::accumulate(report.neighbor_distances.begin(), report.neighbor_distances.end(), 0.0) / report.queries;
  report.random_distance =
      std::accumulate(report.random_distances.begin(), report.random_distances.end(), 0.0) / report.queries;
  report.p_value = paired_permutation_p(diffs, config.permutations, rng);
  return report;
}

void write_metrics_kv(const std::filesystem::path& path, const std::map<std::string, double>& values) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[64];
  for (const auto& [k, v] : values) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    out << k << '=' << buf << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::map<std::string, double> read_metrics_kv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::map<std::string, double> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string() + ":" + std::to_string(n) + ": expected key=value");
    try {
      out[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(n) + ": bad number");
    }
  }
  return out;
}

std::string format_pcp_table(const PcpResult& pcp) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-12s %8s %8s %8s\n", "group", "correct", "total", "pcp");
  os << buf;
  for (const auto& [g, t] : pcp.total) {
    std::snprintf(buf, sizeof buf, "%-12s %8d %8d %8.3f\n", g.c_str(), pcp.correct.at(g), t, pcp.accuracy(g));
    os << buf;
  }
  if (pcp.degenerate > 0) os << "degenerate limbs skipped: " << pcp.degenerate << '\n';
  return os.str();
}

std::string format_pdj_table(const PdjResult& r) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-12s", "joint");
  os << buf;
  for (float t : r.thresholds) {
    std::snprintf(buf, sizeof buf, " %7.1f", t);
    os << buf;
  }
  os << '\n';
  auto row = [&](const std::string& name, auto value) {
    std::snprintf(buf, sizeof buf, "%-12s", name.c_str());
    os << buf;
    for (std::size_t t = 0; t < r.thresholds.size(); ++t) {
      std::snprintf(buf, sizeof buf, " %7.3f", value(t));
      os << buf;
    }
    os << '\n';
  };
  for (std::size_t j = 0; j < r.detected.size(); ++j)
    row(std::string(joint_name(static_cast<int>(j))), [&](std::size_t t) { return r.rate(static_cast<int>(j), t); });
  row("mean", [&](std::size_t t) { return r.mean_rate(t); });
  if (r.skipped > 0) os << "frames skipped (zero torso): " << r.skipped << '\n';
  return os.str();
}

RgbImage plot_pdj_curve(const PdjResult& r, int size) {
  if (size < 64) throw ParamError("plot size must be at least 64");
  RgbImage img(size, size);
  std::fill(img.rgb.begin(), img.rgb.end(), 255);
  const int margin = size / 10;
  const int span = size - 2 * margin;
  auto put = [&](int x, int y, std::uint8_t cr, std::uint8_t cg, std::uint8_t cb) {
    if (x < 0 || y < 0 || x >= size || y >= size) return;
    auto* p = &img.rgb[(static_cast<std::size_t>(y) * size + x) * 3];
    p[0] = cr;
    p[1] = cg;
    p[2] = cb;
  };
  for (int i = 0; i <= span; ++i) {
    put(margin + i, size - margin, 0, 0, 0);
    put(margin, size - margin - i, 0, 0, 0);
  }
  if (r.thresholds.empty()) return img;
  const float tmax = r.thresholds.back() > 0 ? r.thresholds.back() : 1.0f;
  auto to_px = [&](float t, double rate) {
    return std::pair<int, int>{margin + static_cast<int>(std::lround(t / tmax * span)),
                               size - margin - static_cast<int>(std::lround(rate * span))};
  };
  for (std::size_t j = 0; j < r.detected.size(); ++j) {
    const double hue = static_cast<double>(j) / std::max<std::size_t>(1, r.detected.size());
    const auto cr = static_cast<std::uint8_t>(127.5 * (1 + std::cos(2 * M_PI * hue)));
    const auto cg = static_cast<std::uint8_t>(127.5 * (1 + std::cos(2 * M_PI * (hue - 1.0 / 3))));
    const auto cb = static_cast<std::uint8_t>(127.5 * (1 + std::cos(2 * M_PI * (hue - 2.0 / 3))));
    std::pair<int, int> prev = to_px(0.0f, 0.0);
    for (std::size_t t = 0; t < r.thresholds.size(); ++t) {
      const auto cur = to_px(r.thresholds[t], r.rate(static_cast<int>(j), t));
      const int steps = std::max(std::abs(cur.first - prev.first), std::abs(cur.second - prev.second));
      for (int s = 0; s <= steps; ++s) {
        const double a = steps == 0 ? 0.0 : static_cast<double>(s) / steps;
        put(static_cast<int>(std::lround(prev.first + a * (cur.first - prev.first))),
            static_cast<int>(std::lround(prev.second + a * (cur.second - prev.second))), cr, cg, cb);
      }
      prev = cur;
    }
  }
  return img;
}

}  // namespace pfm
