#pragma once

#include <random>
#include <vector>

#include "pfm/corpus.hpp"
#include "pfm/tensor.hpp"

namespace pfm {

struct Provenance {
  int appearance_clip = -1;  // index into the clip list
  int appearance_frame = -1;
  int flow_clip = -1;
  int flow_frame = -1;
  int crop_x = 0;  // appearance crop, shared by both patches
  int crop_y = 0;
  int flow_x = 0;  // flow crop
  int flow_y = 0;
  bool flipped = false;
  bool reversed = false;
};

struct TripletSample {
  Tensor patch_a;     // 1 x C x P x P, frame n
  Tensor patch_b;     // 1 x C x P x P, frame n + delta_n
  Tensor flow_block;  // 2*delta_n x P x P, channels u1, v1, u2, v2, ...
  int label = 0;      // 1 = the flow explains the appearance change
  Provenance provenance;
};

struct SamplerConfig {
  int delta_n = 4;
  int patch_size = 64;
  int channels = 1;  // grayscale replicated when more than one
};

struct BatchConfig {
  int positives = 8;
  int negatives_per_positive = 2;
  SamplerConfig sampler;
  float p_flip = 0.5f;
  float p_reverse = 0.5f;
};

struct Batch {
  std::vector<TripletSample> samples;
  int positive_count() const;
};

// Stacked network inputs for a batch.
struct BatchTensors {
  Tensor patch_a;     // N x C x P x P
  Tensor patch_b;     // N x C x P x P
  Tensor flow_block;  // N x 2dn x P x P
  std::vector<int> labels;
};

using Rng = std::mt19937_64;

// Indices of clips long enough for blocks of delta_n flows; throws when
// none qualifies or an otherwise eligible clip has no flows.
std::vector<int> eligible_clips(const std::vector<VideoClip>& clips, const SamplerConfig& config);

TripletSample sample_positive(const std::vector<VideoClip>& clips, const SamplerConfig& config, Rng& rng);
TripletSample sample_negative(const std::vector<VideoClip>& clips, const TripletSample& positive,
                              const SamplerConfig& config, Rng& rng);
TripletSample augment(const TripletSample& sample, Rng& rng, float p_flip, float p_reverse);
Batch make_batch(const std::vector<VideoClip>& clips, const BatchConfig& config, Rng& rng);
BatchTensors stack(const Batch& batch);

// Crops without augmentation, used for validation and probes.
Tensor crop_patch(const GrayImage& frame, int x, int y, int size, int channels);
Tensor crop_flow_block(const VideoClip& clip, int first_flow, int delta_n, int x, int y, int size);

}  // namespace pfm
