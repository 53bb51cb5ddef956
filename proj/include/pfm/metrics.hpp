#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pfm/corpus.hpp"
#include "pfm/geometry.hpp"
#include "pfm/image.hpp"
#include "pfm/nets.hpp"
#include "pfm/sampler.hpp"
#include "pfm/tensor.hpp"

namespace pfm {

struct Limb {
  std::string name;
  std::string group;
  int a = 0;
  int b = 0;
};

struct SkeletonEval {
  std::vector<Limb> limbs;
  int torso_a = kLeftShoulder;
  int torso_b = kRightHip;
  float alpha = 0.5f;
  std::vector<float> thresholds = {0.1f, 0.2f, 0.3f, 0.4f};
  int num_joints = kNumJoints;

  // Upper and lower arms (both sides) plus the two torso sides.
  static SkeletonEval standard();
  void validate() const;
};

// Unweighted centroid (x = column, y = row) of the top_k largest values;
// ties at the cut-off go to the earlier pixel in row-major order.
Point2 decode_heatmap(std::span<const float> map, int width, int height, int top_k = 20);

struct PcpResult {
  std::map<std::string, int> correct;  // per limb group
  std::map<std::string, int> total;
  int degenerate = 0;  // zero-length ground-truth limbs skipped

  double accuracy(const std::string& group) const;
  void merge(const PcpResult& other);
};

PcpResult strict_pcp(const Pose& pred, const Pose& gt, const SkeletonEval& skel);
PcpResult strict_pcp(const std::vector<Pose>& pred, const std::vector<Pose>& gt, const SkeletonEval& skel);

struct PdjResult {
  std::vector<float> thresholds;
  // detected[joint][threshold index]
  std::vector<std::vector<int>> detected;
  int frames = 0;
  int skipped = 0;  // frames with zero torso diameter

  double rate(int joint, std::size_t threshold_index) const;
  // Mean over joints.
  double mean_rate(std::size_t threshold_index) const;
};

PdjResult pdj(const std::vector<Pose>& pred, const std::vector<Pose>& gt, const SkeletonEval& skel);
PdjResult pdj(const Pose& pred, const Pose& gt, const SkeletonEval& skel);

// Fraction of rows whose argmax matches the label.
double accuracy_from_scores(const Tensor& scores, std::span<const int> labels);
double binary_accuracy(JointModel& model, const std::vector<BatchTensors>& batches);

struct ActionProtocol {
  int num_frames = 25;
  bool corners = true;  // four corners plus centre; centre only otherwise
  bool flips = true;
  int crop_size = 64;
  int channels = 1;

  int samples_per_video() const { return num_frames * (corners ? 5 : 1) * (flips ? 2 : 1); }
};

// Maps a batch N x C x S x S to class scores N x classes.
using ScoreFn = std::function<Tensor(const Tensor&)>;

struct ActionPrediction {
  int label = 0;
  std::vector<double> mean_probabilities;
  int samples = 0;
};

ActionPrediction eval_action_video(const ScoreFn& model, const VideoClip& clip, const ActionProtocol& protocol);
ScoreFn score_fn(ActionModel& model);

struct ActionEvaluation {
  int correct = 0;
  int total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

// Clip-level accuracy of the protocol over the listed labelled clips.
ActionEvaluation evaluate_action(const ScoreFn& model, const std::vector<VideoClip>& clips,
                                 const std::vector<int>& clip_indices, const ActionProtocol& protocol);

struct NnProbeConfig {
  int num_queries = 200;
  int frame_stride = 3;  // candidate frames taken every `frame_stride` frames
  int crop_size = 64;
  int channels = 1;
  int permutations = 10000;
};

struct NnProbeReport {
  double neighbor_distance = 0.0;  // mean normalised joint distance to the FC6 neighbour
  double random_distance = 0.0;    // same for a random frame from another clip
  double p_value = 1.0;            // two-sided paired sign-flip test
  int queries = 0;
  std::vector<double> neighbor_distances;
  std::vector<double> random_distances;
};

// Centre-crop FC6 features (one row per frame).
std::vector<std::vector<float>> appearance_features(const Network& net, ParamSet& params,
                                                    const std::vector<Tensor>& images);

// Mean per-joint distance after centring on the torso and dividing by the
// torso diameter.
double normalized_pose_distance(const Pose& a, const Pose& b, const SkeletonEval& skel);

NnProbeReport nn_probe(const Network& appearance, ParamSet& params, const std::vector<VideoClip>& clips,
                       const NnProbeConfig& config, std::mt19937_64& rng);

// Two-sided sign-flip permutation p-value for the mean of paired differences.
double paired_permutation_p(const std::vector<double>& differences, int permutations, std::mt19937_64& rng);

// key=value lines sorted by key.
void write_metrics_kv(const std::filesystem::path& path, const std::map<std::string, double>& values);
std::map<std::string, double> read_metrics_kv(const std::filesystem::path& path);
std::string format_pcp_table(const PcpResult& pcp);
std::string format_pdj_table(const PdjResult& pdj);
// PDJ detection rate against threshold, one polyline per joint.
RgbImage plot_pdj_curve(const PdjResult& pdj, int size = 320);

}  // namespace pfm
