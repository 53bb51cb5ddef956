#include "pfm/pose.hpp"

#include <algorithm>
#include <cmath>

#include "pfm/errors.hpp"
#include "pfm/graph.hpp"
#include "pfm/metrics.hpp"
#include "pfm/sampler.hpp"
#include "pfm/skeleton.hpp"

namespace pfm {

Point2 CropBox::to_crop(Point2 p, int crop_size) const {
  const float s = crop_size / side;
  return {(p.x - x0) * s, (p.y - y0) * s};
}

Point2 CropBox::to_frame(Point2 p, int crop_size) const {
  const float s = side / crop_size;
  return {x0 + p.x * s, y0 + p.y * s};
}

CropBox torso_crop(const Pose& joints, float factor) {
  if (joints.size() != static_cast<std::size_t>(kNumJoints)) throw ShapeError("torso crop needs all joints");
  if (!(factor > 0.0f)) throw ParamError("torso expansion factor must be positive");
  float lo_x = 1e30f, lo_y = 1e30f, hi_x = -1e30f, hi_y = -1e30f;
  for (int j : {int(kLeftShoulder), int(kRightShoulder), int(kLeftHip), int(kRightHip)}) {
    lo_x = std::min(lo_x, joints[j].x);
    hi_x = std::max(hi_x, joints[j].x);
    lo_y = std::min(lo_y, joints[j].y);
    hi_y = std::max(hi_y, joints[j].y);
  }
  const float cx = (lo_x + hi_x) / 2, cy = (lo_y + hi_y) / 2;
  float half = factor * std::max(hi_x - lo_x, hi_y - lo_y) / 2;
  if (!(half > 0.0f)) throw DataError("degenerate torso box");
  float reach = 0.0f;
  for (const Point2& p : joints) reach = std::max({reach, std::abs(p.x - cx), std::abs(p.y - cy)});
  if (reach >= half) half = reach * 1.05f + 1.0f;
  return {cx - half, cy - half, 2 * half};
}

Tensor pose_target_heatmaps(const Pose& joints, int crop_size, int heatmap_size, int radius) {
  if (crop_size <= 0 || heatmap_size <= 0 || radius < 0) throw ParamError("bad heatmap geometry");
  const int k = static_cast<int>(joints.size());
  const int h = heatmap_size;
  Tensor out({k, h, h}, -1.0f);
  for (int j = 0; j < k; ++j) {
    const Point2 p = joints[j];
    if (!(p.x >= 0.0f && p.y >= 0.0f && p.x < crop_size && p.y < crop_size))
      throw DataError("joint " + std::to_string(j) + " lies outside the crop; re-crop required");
    const int cx = std::min(h - 1, static_cast<int>(std::lround(p.x * h / crop_size)));
    const int cy = std::min(h - 1, static_cast<int>(std::lround(p.y * h / crop_size)));
    for (int y = std::max(0, cy - radius); y <= std::min(h - 1, cy + radius); ++y)
      for (int x = std::max(0, cx - radius); x <= std::min(h - 1, cx + radius); ++x)
        out[(static_cast<std::size_t>(j) * h + y) * h + x] = 1.0f;
  }
  return out;
}

Tensor reweighting_weights(const Tensor& target) {
  if (target.rank() < 2) throw ShapeError("heatmap targets need at least two dimensions");
  const std::size_t plane =
      static_cast<std::size_t>(target.dim(target.rank() - 1)) * target.dim(target.rank() - 2);
  Tensor w(target.shape());
  const std::size_t maps = target.numel() / plane;
  for (std::size_t m = 0; m < maps; ++m) {
    const float* t = target.data().data() + m * plane;
    const std::size_t pos = static_cast<std::size_t>(std::count_if(t, t + plane, [](float v) { return v > 0.0f; }));
    const std::size_t neg = plane - pos;
    if (pos == 0 || neg == 0) throw DataError("heatmap target map needs both positive and negative pixels");
    const float wp = 1.0f / static_cast<float>(pos), wn = 1.0f / static_cast<float>(neg);
    for (std::size_t i = 0; i < plane; ++i) w[m * plane + i] = t[i] > 0.0f ? wp : wn;
  }
  return w;
}

Tensor reweighted_euclidean_grad(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("prediction " + shape_string(pred.shape()) + " vs target " + shape_string(target.shape()));
  Tensor g = reweighting_weights(target);
  for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= pred[i] - target[i];
  return g;
}

std::vector<PoseExample> make_pose_examples(const std::vector<VideoClip>& clips, const std::vector<int>& clip_indices,
                                            const PoseCropConfig& config) {
  std::vector<PoseExample> out;
  for (int c : clip_indices) {
    const VideoClip& clip = clips.at(c);
    if (!clip.joints()) throw DataError("clip " + clip.id() + " has no joint annotations");
    for (int f = 0; f < clip.frame_count(); ++f) {
      const Pose& joints = (*clip.joints())[f];
      PoseExample ex;
      ex.box = torso_crop(joints, config.torso_factor);
      GrayImage img = crop_resize(clip.frame(f), ex.box.x0, ex.box.y0, ex.box.side, config.crop_size);
      ex.image = crop_patch(img, 0, 0, config.crop_size, config.channels);
      Pose local(joints.size());
      for (std::size_t j = 0; j < joints.size(); ++j) local[j] = ex.box.to_crop(joints[j], config.crop_size);
      ex.target = pose_target_heatmaps(local, config.crop_size, config.heatmap_size, config.radius);
      ex.joints = joints;
      ex.clip = c;
      ex.frame = f;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<Pose> predict_poses(PoseModel& model, const std::vector<PoseExample>& examples, int crop_size,
                                int top_k, int batch_size) {
  std::vector<Pose> out;
  out.reserve(examples.size());
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t n = std::min<std::size_t>(batch_size, examples.size() - start);
    Shape s = examples[start].image.shape();
    const std::size_t per = examples[start].image.numel();
    s[0] = static_cast<int>(n);
    Tensor batch(s);
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(examples[start + i].image.data().begin(), per, batch.data().begin() + i * per);
    Graph g;
    const Tensor& maps = g.value(model.forward(g, g.input(batch)));
    const int k = maps.dim(1), h = maps.dim(2), w = maps.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < n; ++i) {
      Pose p(k);
      for (int j = 0; j < k; ++j) {
        const Point2 cell = decode_heatmap(maps.data().subspan((i * k + j) * plane, plane), w, h, top_k);
        const Point2 local{cell.x * crop_size / w, cell.y * crop_size / h};
        p[j] = examples[start + i].box.to_frame(local, crop_size);
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

PoseEvaluation evaluate_pose(PoseModel& model, const std::vector<VideoClip>& clips,
                             const std::vector<int>& clip_indices, const PoseCropConfig& crop, int top_k,
                             const SkeletonEval& skel) {
  const std::vector<PoseExample> examples = make_pose_examples(clips, clip_indices, crop);
  if (examples.empty()) throw DataError("no pose evaluation examples");
  PoseEvaluation ev;
  ev.predicted = predict_poses(model, examples, crop.crop_size, top_k);
  for (const PoseExample& ex : examples) ev.truth.push_back(ex.joints);
  ev.pcp = strict_pcp(ev.predicted, ev.truth, skel);
  ev.pdj = pdj(ev.predicted, ev.truth, skel);
  return ev;
}

}  // namespace pfm
