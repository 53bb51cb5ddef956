#include "pfm/sampler.hpp"

#include <algorithm>

#include "pfm/errors.hpp"

namespace pfm {

namespace {

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

void check_config(const SamplerConfig& c) {
  if (c.delta_n <= 0) throw ParamError("delta_n must be positive");
  if (c.patch_size <= 0) throw ParamError("patch_size must be positive");
  if (c.channels <= 0) throw ParamError("channels must be positive");
}

// Random crop origin that keeps the whole patch inside the frame.
std::pair<int, int> random_origin(const VideoClip& clip, int size, Rng& rng) {
  const ClipInfo& info = clip.info();
  if (size > info.width || size > info.height)
    throw ShapeError("patch size " + std::to_string(size) + " exceeds the " + std::to_string(info.width) + "x" +
                     std::to_string(info.height) + " frames of clip '" + info.id + "'");
  return {uniform_int(rng, 0, info.width - size), uniform_int(rng, 0, info.height - size)};
}

// Mirror every plane of an image-like tensor; `negate_even` flips the sign of
// even channels (the u components of a flow block).
Tensor mirror(const Tensor& t, bool negate_even) {
  Tensor out(t.shape());
  const int w = t.dim(t.rank() - 1);
  const int h = t.dim(t.rank() - 2);
  const int planes = static_cast<int>(t.numel() / (static_cast<std::size_t>(w) * h));
  const auto src = t.data();
  auto dst = out.data();
  for (int p = 0; p < planes; ++p) {
    const float sign = negate_even && p % 2 == 0 ? -1.0f : 1.0f;
    const std::size_t base = static_cast<std::size_t>(p) * w * h;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) dst[base + y * w + x] = sign * src[base + y * w + (w - 1 - x)];
  }
  return out;
}

// Reverse the order of the (u, v) pairs and negate them.
Tensor reverse_block(const Tensor& block) {
  Tensor out(block.shape());
  const int fields = block.dim(0) / 2;
  const std::size_t plane = static_cast<std::size_t>(block.dim(1)) * block.dim(2);
  const auto src = block.data();
  auto dst = out.data();
  for (int k = 0; k < fields; ++k)
    for (std::size_t i = 0; i < 2 * plane; ++i)
      dst[2 * plane * (fields - 1 - k) + i] = -src[2 * plane * k + i];
  return out;
}

TripletSample make_negative(const std::vector<VideoClip>& clips, const TripletSample& positive,
                            const SamplerConfig& config, int flow_clip, int flow_frame, Rng& rng) {
  TripletSample s;
  s.patch_a = positive.patch_a;
  s.patch_b = positive.patch_b;
  s.label = 0;
  s.provenance = positive.provenance;
  s.provenance.flipped = s.provenance.reversed = false;
  const auto [fx, fy] = random_origin(clips[flow_clip], config.patch_size, rng);
  s.flow_block = crop_flow_block(clips[flow_clip], flow_frame, config.delta_n, fx, fy, config.patch_size);
  s.provenance.flow_clip = flow_clip;
  s.provenance.flow_frame = flow_frame;
  s.provenance.flow_x = fx;
  s.provenance.flow_y = fy;
  return s;
}

}  // namespace

int Batch::positive_count() const {
  return static_cast<int>(std::count_if(samples.begin(), samples.end(), [](const auto& s) { return s.label == 1; }));
}

std::vector<int> eligible_clips(const std::vector<VideoClip>& clips, const SamplerConfig& config) {
  check_config(config);
  std::vector<int> out;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].frame_count() < config.delta_n + 1) continue;
    if (clips[i].flow_count() != clips[i].frame_count() - 1)
      throw NotFoundError("clip '" + clips[i].id() + "' is missing flow files (run precompute_flows)");
    out.push_back(static_cast<int>(i));
  }
  if (out.empty())
    throw DataError("no clip has the " + std::to_string(config.delta_n + 1) + " frames needed for delta_n=" +
                    std::to_string(config.delta_n));
  return out;
}

Tensor crop_patch(const GrayImage& frame, int x, int y, int size, int channels) {
  if (x < 0 || y < 0 || x + size > frame.width || y + size > frame.height)
    throw ShapeError("patch crop outside the frame");
  Tensor out({1, channels, size, size});
  auto d = out.data();
  for (int c = 0; c < channels; ++c)
    for (int r = 0; r < size; ++r) {
      const float* src = &frame.pixels[static_cast<std::size_t>(y + r) * frame.width + x];
      std::copy(src, src + size, d.begin() + (static_cast<std::size_t>(c) * size + r) * size);
    }
  return out;
}

Tensor crop_flow_block(const VideoClip& clip, int first_flow, int delta_n, int x, int y, int size) {
  Tensor out({2 * delta_n, size, size});
  auto d = out.data();
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (int k = 0; k < delta_n; ++k) {
    const FlowField& f = clip.flow(first_flow + k);
    if (x < 0 || y < 0 || x + size > f.width || y + size > f.height) throw ShapeError("flow crop outside the field");
    for (int r = 0; r < size; ++r) {
      const std::size_t src = f.index(x, y + r);
      std::copy_n(f.u.begin() + src, size, d.begin() + 2 * k * plane + r * size);
      std::copy_n(f.v.begin() + src, size, d.begin() + (2 * k + 1) * plane + r * size);
    }
  }
  return out;
}

TripletSample sample_positive(const std::vector<VideoClip>& clips, const SamplerConfig& config, Rng& rng) {
  const std::vector<int> eligible = eligible_clips(clips, config);
  const int i = eligible[uniform_int(rng, 0, static_cast<int>(eligible.size()) - 1)];
  const VideoClip& clip = clips[i];
  const int n = uniform_int(rng, 0, clip.frame_count() - 1 - config.delta_n);
  const auto [x, y] = random_origin(clip, config.patch_size, rng);
  TripletSample s;
  s.patch_a = crop_patch(clip.frame(n), x, y, config.patch_size, config.channels);
  s.patch_b = crop_patch(clip.frame(n + config.delta_n), x, y, config.patch_size, config.channels);
  s.flow_block = crop_flow_block(clip, n, config.delta_n, x, y, config.patch_size);
  s.label = 1;
  s.provenance = {i, n, i, n, x, y, x, y, false, false};
  return s;
}

TripletSample sample_negative(const std::vector<VideoClip>& clips, const TripletSample& positive,
                              const SamplerConfig& config, Rng& rng) {
  const std::vector<int> eligible = eligible_clips(clips, config);
  std::vector<int> others;
  for (int j : eligible)
    if (j != positive.provenance.appearance_clip) others.push_back(j);
  if (others.empty()) throw DataError("negatives need a second clip: the corpus has only one eligible clip");
  const int j = others[uniform_int(rng, 0, static_cast<int>(others.size()) - 1)];
  const int k = uniform_int(rng, 0, clips[j].frame_count() - 1 - config.delta_n);
  return make_negative(clips, positive, config, j, k, rng);
}

TripletSample augment(const TripletSample& sample, Rng& rng, float p_flip, float p_reverse) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  const bool flip = u(rng) < p_flip;
  const bool reverse = u(rng) < p_reverse;
  TripletSample out = sample;
  if (flip) {
    out.patch_a = mirror(out.patch_a, false);
    out.patch_b = mirror(out.patch_b, false);
    out.flow_block = mirror(out.flow_block, true);
    out.provenance.flipped = !out.provenance.flipped;
  }
  if (reverse) {
    std::swap(out.patch_a, out.patch_b);
    out.flow_block = reverse_block(out.flow_block);
    out.provenance.reversed = !out.provenance.reversed;
  }
  return out;
}

Batch make_batch(const std::vector<VideoClip>& clips, const BatchConfig& config, Rng& rng) {
  if (config.positives <= 0) throw ParamError("batch needs at least one positive");
  if (config.negatives_per_positive < 0) throw ParamError("negatives_per_positive must be non-negative");
  std::vector<TripletSample> positives;
  for (int p = 0; p < config.positives; ++p) positives.push_back(sample_positive(clips, config.sampler, rng));

  Batch batch;
  for (int p = 0; p < config.positives; ++p) {
    const TripletSample& pos = positives[p];
    batch.samples.push_back(augment(pos, rng, config.p_flip, config.p_reverse));
    std::vector<int> donors;
    for (int q = 0; q < config.positives; ++q)
      if (positives[q].provenance.appearance_clip != pos.provenance.appearance_clip) donors.push_back(q);
    for (int m = 0; m < config.negatives_per_positive; ++m) {
      TripletSample neg;
      if (donors.empty()) {
        // Every positive came from the same clip: fall back to a fresh draw.
        neg = sample_negative(clips, pos, config.sampler, rng);
      } else {
        const TripletSample& donor = positives[donors[uniform_int(rng, 0, static_cast<int>(donors.size()) - 1)]];
        neg = make_negative(clips, pos, config.sampler, donor.provenance.appearance_clip,
                            donor.provenance.appearance_frame, rng);
      }
      batch.samples.push_back(augment(neg, rng, config.p_flip, config.p_reverse));
    }
  }
  return batch;
}

BatchTensors stack(const Batch& batch) {
  if (batch.samples.empty()) throw ShapeError("cannot stack an empty batch");
  const TripletSample& first = batch.samples.front();
  const int n = static_cast<int>(batch.samples.size());
  auto stacked_shape = [n](const Tensor& t, bool has_lead) {
    Shape s = t.shape();
    if (has_lead) s[0] = n;
    else s.insert(s.begin(), n);
    return s;
  };
  BatchTensors out{Tensor(stacked_shape(first.patch_a, true)), Tensor(stacked_shape(first.patch_b, true)),
                   Tensor(stacked_shape(first.flow_block, false)), {}};
  const std::size_t pa = first.patch_a.numel(), fb = first.flow_block.numel();
  for (int i = 0; i < n; ++i) {
    const TripletSample& s = batch.samples[i];
    if (s.patch_a.numel() != pa || s.patch_b.numel() != pa || s.flow_block.numel() != fb)
      throw ShapeError("batch samples have inconsistent shapes");
    std::copy_n(s.patch_a.data().begin(), pa, out.patch_a.data().begin() + i * pa);
    std::copy_n(s.patch_b.data().begin(), pa, out.patch_b.data().begin() + i * pa);
    std::copy_n(s.flow_block.data().begin(), fb, out.flow_block.data().begin() + i * fb);
    out.labels.push_back(s.label);
  }
  return out;
}

}  // namespace pfm
