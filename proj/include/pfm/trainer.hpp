#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pfm/checkpoint.hpp"
#include "pfm/corpus.hpp"
#include "pfm/nets.hpp"
#include "pfm/pose.hpp"
#include "pfm/sampler.hpp"

namespace pfm {

struct LrStage {
  float lr = 0.0f;
  int iterations = 0;
};

int total_iterations(const std::vector<LrStage>& schedule);
// Learning rate for the zero-based step.
float lr_at(const std::vector<LrStage>& schedule, int step);
void validate_schedule(const std::vector<LrStage>& schedule);

// Clip indices split by hashing the clip ids: the ceil(fraction * n) clips
// with the smallest hashes are held out.
struct ClipSplit {
  std::vector<int> train;
  std::vector<int> held_out;
};
ClipSplit split_clips(const std::vector<VideoClip>& clips, double fraction);

struct TrainHooks {
  std::function<void(const HistoryRecord&)> on_record;
  // Called with every finite step loss.
  std::function<void(int step, float loss)> on_step;
  // Runs before each step; lets callers inspect or perturb the parameters.
  std::function<void(int step, ParamSet& params)> before_step;
  // Periodic and final checkpoints are written here when set.
  std::filesystem::path checkpoint_path;
};

struct TrainConfig {
  int positives = 8;
  int negatives_per_positive = 2;
  std::vector<LrStage> schedule = {{1e-2f, 2000}, {1e-3f, 1000}};
  float momentum = 0.9f;
  std::uint64_t seed = 1;
  int checkpoint_interval = 500;
  int log_interval = 50;
  double validation_fraction = 0.2;
  int validation_samples = 600;
  float p_flip = 0.5f;
  float p_reverse = 0.5f;
  int max_bad_steps = 3;

  // "mini" (batch 24) or "paper" (batch 128).
  static TrainConfig preset(const std::string& name);
  int batch_size() const { return positives * (1 + negatives_per_positive); }
  void validate() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  ClipSplit split;
  double final_val_acc = 0.0;
  int steps = 0;          // optimizer updates applied
  int skipped_steps = 0;  // non-finite steps dropped
};

// Unaugmented batches from the held-out clips totalling at least `samples`.
std::vector<BatchTensors> validation_batches(const std::vector<VideoClip>& clips, const std::vector<int>& held_out,
                                             const TrainConfig& config, const SamplerConfig& sampler);

TrainResult train_unsupervised(const std::vector<VideoClip>& clips, JointModel& model, const TrainConfig& config,
                               const TrainHooks& hooks = {});

struct PoseTrainConfig {
  PoseCropConfig crop;
  std::vector<LrStage> schedule = {{1e-3f, 600}};
  float momentum = 0.9f;
  int batch_size = 16;
  int decode_top_k = 20;  // pixels averaged when decoding a heatmap
  std::uint64_t seed = 1;
  int log_interval = 10;
  double validation_fraction = 0.2;

  // "mini" (64 px crops, 16 px maps) or "paper" (256 px crops, 60 px maps).
  static PoseTrainConfig preset(const std::string& name);
  void validate() const;
};

struct FinetuneResult {
  Checkpoint checkpoint;
  ClipSplit split;
};

// Trains on the training side of the split with the reweighted Euclidean
// loss averaged over the joint maps.
FinetuneResult finetune_pose(const std::vector<VideoClip>& clips, PoseModel& model, const PoseTrainConfig& config,
                             const TrainHooks& hooks = {});

struct ActionTrainConfig {
  int num_classes = 4;
  bool freeze_trunk = false;
  std::vector<LrStage> schedule = {{1e-2f, 150}};
  float momentum = 0.9f;
  int batch_size = 32;
  std::uint64_t seed = 1;
  int train_clip_limit = 0;  // 0 keeps every training clip
  int log_interval = 10;
  double test_fraction = 0.2;
  int crop_size = 64;
  int channels = 1;

  // "mini" or "paper" (224 px crops, batch 256).
  static ActionTrainConfig preset(const std::string& name);
  void validate() const;
};

// Training clips actually used after applying the clip limit.
std::vector<int> limit_training_clips(const std::vector<int>& train, int limit, std::uint64_t seed);

// Trains the classifier on random crops of random frames (with horizontal
// flips) from the training clips. split.train lists the clips used.
FinetuneResult finetune_action(const std::vector<VideoClip>& clips, ActionModel& model,
                               const ActionTrainConfig& config, const TrainHooks& hooks = {});

}  // namespace pfm
