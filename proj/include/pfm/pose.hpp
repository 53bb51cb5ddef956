#pragma once

#include <vector>

#include "pfm/corpus.hpp"
#include "pfm/geometry.hpp"
#include "pfm/image.hpp"
#include "pfm/metrics.hpp"
#include "pfm/nets.hpp"
#include "pfm/tensor.hpp"

namespace pfm {

// Square crop [x0, x0 + side) x [y0, y0 + side) in frame coordinates.
struct CropBox {
  float x0 = 0.0f;
  float y0 = 0.0f;
  float side = 0.0f;

  Point2 to_crop(Point2 p, int crop_size) const;
  Point2 to_frame(Point2 p, int crop_size) const;
};

// Bounding box of the shoulders and hips, scaled by `factor` about its centre
// and made square on its longer side. If a joint still falls outside, the
// square grows about the same centre until every joint lies strictly inside.
CropBox torso_crop(const Pose& joints, float factor);

// K x H x H map of -1 with a (2r+1)^2 block of +1 around each joint, mapped
// to heatmap cells by round(x * H / crop_size) and clipped at the borders.
Tensor pose_target_heatmaps(const Pose& joints_in_crop, int crop_size, int heatmap_size, int radius = 1);

// Per-pixel weights 1/P on positive and 1/N on negative pixels, counted per
// map. Accepts K x H x W or N x K x H x W.
Tensor reweighting_weights(const Tensor& target);
// (pred - target) scaled by reweighting_weights(target).
Tensor reweighted_euclidean_grad(const Tensor& pred, const Tensor& target);

struct PoseExample {
  Tensor image;  // 1 x C x S x S
  Tensor target;  // K x H x H
  Pose joints;    // frame coordinates
  CropBox box;
  int clip = 0;
  int frame = 0;
};

struct PoseCropConfig {
  float torso_factor = 1.5f;
  int crop_size = 256;
  int heatmap_size = 60;
  int radius = 1;
  int channels = 3;
};

// One example per annotated frame of the listed clips.
std::vector<PoseExample> make_pose_examples(const std::vector<VideoClip>& clips, const std::vector<int>& clip_indices,
                                            const PoseCropConfig& config);

// Decoded joint positions in frame coordinates, one pose per example.
std::vector<Pose> predict_poses(PoseModel& model, const std::vector<PoseExample>& examples, int crop_size,
                                int top_k = 20, int batch_size = 16);

struct PoseEvaluation {
  PcpResult pcp;
  PdjResult pdj;
  std::vector<Pose> predicted;
  std::vector<Pose> truth;
};

PoseEvaluation evaluate_pose(PoseModel& model, const std::vector<VideoClip>& clips,
                             const std::vector<int>& clip_indices, const PoseCropConfig& crop, int top_k,
                             const SkeletonEval& skel);

}  // namespace pfm
