#include "pfm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pfm/errors.hpp"
#include "pfm/graph.hpp"
#include "pfm/metrics.hpp"
#include "pfm/optim.hpp"
#include "pfm/parallel.hpp"

namespace pfm {

int total_iterations(const std::vector<LrStage>& schedule) {
  int total = 0;
  for (const LrStage& s : schedule) total += s.iterations;
  return total;
}

float lr_at(const std::vector<LrStage>& schedule, int step) {
  if (step < 0) throw ParamError("negative step");
  int end = 0;
  for (const LrStage& s : schedule) {
    end += s.iterations;
    if (step < end) return s.lr;
  }
  throw ParamError("step " + std::to_string(step) + " is beyond the schedule");
}

void validate_schedule(const std::vector<LrStage>& schedule) {
  if (schedule.empty()) throw ParamError("learning-rate schedule is empty");
  for (const LrStage& s : schedule) {
    if (!(s.lr > 0.0f) || !std::isfinite(s.lr)) throw ParamError("learning rates must be positive and finite");
    if (s.iterations <= 0) throw ParamError("schedule stages need a positive iteration count");
  }
}

ClipSplit split_clips(const std::vector<VideoClip>& clips, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ParamError("split fraction must lie in (0, 1)");
  const int n = static_cast<int>(clips.size());
  if (n < 2) throw DataError("splitting needs at least two clips");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::uint64_t> hashes(n);
  for (int i = 0; i < n; ++i) hashes[i] = fnv1a(clips[i].id());
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (hashes[a] != hashes[b]) return hashes[a] < hashes[b];
    return clips[a].id() < clips[b].id();
  });
  const int held = std::clamp(static_cast<int>(std::ceil(fraction * n - 1e-9)), 1, n - 1);
  ClipSplit s;
  s.held_out.assign(order.begin(), order.begin() + held);
  s.train.assign(order.begin() + held, order.end());
  std::sort(s.held_out.begin(), s.held_out.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

namespace {

std::vector<VideoClip> subset(const std::vector<VideoClip>& clips, const std::vector<int>& indices) {
  std::vector<VideoClip> out;
  out.reserve(indices.size());
  for (int i : indices) out.push_back(clips.at(i));
  return out;
}

constexpr float kNaN = std::numeric_limits<float>::quiet_NaN();

// Runs the schedule, skipping non-finite steps and aborting after too many in
// a row. `step` performs forward and backward and returns the loss; `evaluate`
// runs at the end of every evaluation interval and at the end.
struct Loop {
  ParamSet* params = nullptr;
  std::vector<LrStage> schedule;
  float momentum = 0.9f;
  int log_interval = 10;
  int eval_interval = 0;  // 0 evaluates only at the end
  int max_bad_steps = 3;
  std::function<float(int)> step;
  std::function<float()> evaluate;  // NaN when there is nothing to evaluate
  std::function<Checkpoint(const std::vector<HistoryRecord>&)> snapshot;
  const TrainHooks* hooks = nullptr;

  std::vector<HistoryRecord> history;
  int steps = 0;
  int skipped = 0;
  float last_eval = kNaN;

  void run() {
    validate_schedule(schedule);
    const int total = total_iterations(schedule);
    ParamSet last_good = *params;
    std::vector<HistoryRecord> last_good_history;
    int bad = 0;
    double window = 0.0;
    int window_n = 0;
    for (int i = 0; i < total; ++i) {
      if (hooks->before_step) hooks->before_step(i, *params);
      float loss = kNaN;
      try {
        loss = step(i);
        if (!std::isfinite(loss)) throw NonFiniteError("non-finite loss");
      } catch (const NonFiniteError&) {
        loss = kNaN;
      }
      if (std::isnan(loss)) {
        params->drop_grads();
        ++skipped;
        if (++bad >= max_bad_steps) {
          *params = last_good;
          if (!hooks->checkpoint_path.empty()) save_checkpoint(hooks->checkpoint_path, snapshot(last_good_history));
          throw DivergenceError("training diverged at iteration " + std::to_string(i + 1) + " after " +
                                std::to_string(bad) + " consecutive non-finite steps; parameters restored");
        }
      } else {
        bad = 0;
        sgd_momentum_step(*params, lr_at(schedule, i), momentum);
        ++steps;
        window += loss;
        ++window_n;
        if (hooks->on_step) hooks->on_step(i, loss);
      }
      const int done = i + 1;
      const bool eval_now = done == total || (eval_interval > 0 && done % eval_interval == 0);
      const bool log_now = eval_now || (log_interval > 0 && done % log_interval == 0);
      if (!log_now) continue;
      HistoryRecord rec{static_cast<std::uint32_t>(done), window_n ? static_cast<float>(window / window_n) : kNaN,
                        kNaN};
      window = 0.0;
      window_n = 0;
      if (eval_now) {
        try {
          rec.val_acc = last_eval = evaluate ? evaluate() : kNaN;
        } catch (const NonFiniteError&) {
          rec.val_acc = last_eval = kNaN;
        }
      }
      history.push_back(rec);
      if (hooks->on_record) hooks->on_record(rec);
      if (!eval_now) continue;
      bool finite = true;
      for (const auto& [name, lp] : *params) finite = finite && lp.weight.all_finite() && lp.bias.all_finite();
      if (!finite) continue;
      last_good = *params;
      last_good_history = history;
      if (!hooks->checkpoint_path.empty()) save_checkpoint(hooks->checkpoint_path, snapshot(history));
    }
  }
};

}  // namespace

TrainConfig TrainConfig::preset(const std::string& name) {
  TrainConfig c;
  if (name == "mini") return c;
  if (name == "paper") {
    c.positives = 42;
    c.schedule = {{1e-3f, 75000}, {1e-4f, 25000}};
    c.checkpoint_interval = 5000;
    c.log_interval = 100;
    return c;
  }
  throw ParamError("unknown training preset '" + name + "' (expected mini or paper)");
}

void TrainConfig::validate() const {
  if (positives < 1 || negatives_per_positive < 1) throw ParamError("batch needs positives and negatives");
  validate_schedule(schedule);
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ParamError("momentum must lie in [0, 1)");
  if (checkpoint_interval < 1 || log_interval < 1) throw ParamError("intervals must be positive");
  if (validation_samples < 1) throw ParamError("validation_samples must be positive");
  if (max_bad_steps < 1) throw ParamError("max_bad_steps must be positive");
  if (p_flip < 0.0f || p_flip > 1.0f || p_reverse < 0.0f || p_reverse > 1.0f)
    throw ParamError("augmentation probabilities must lie in [0, 1]");
}

std::vector<BatchTensors> validation_batches(const std::vector<VideoClip>& clips, const std::vector<int>& held_out,
                                             const TrainConfig& config, const SamplerConfig& sampler) {
  const std::vector<VideoClip> val = subset(clips, held_out);
  BatchConfig bc;
  bc.positives = config.positives;
  bc.negatives_per_positive = config.negatives_per_positive;
  bc.sampler = sampler;
  bc.p_flip = 0.0f;
  bc.p_reverse = 0.0f;
  Rng rng(mix_seed(config.seed, 2));
  std::vector<BatchTensors> out;
  int n = 0;
  while (n < config.validation_samples) {
    out.push_back(stack(make_batch(val, bc, rng)));
    n += static_cast<int>(out.back().labels.size());
  }
  return out;
}

TrainResult train_unsupervised(const std::vector<VideoClip>& clips, JointModel& model, const TrainConfig& config,
                               const TrainHooks& hooks) {
  config.validate();
  TrainResult result;
  result.split = split_clips(clips, config.validation_fraction);
  if (result.split.train.size() < 2 || result.split.held_out.size() < 2)
    throw DataError("unsupervised training needs at least two clips on each side of the held-out split");
  const SamplerConfig sc{model.delta_n, model.arch.input_size, model.arch.in_channels};
  eligible_clips(clips, sc);
  const std::vector<VideoClip> train = subset(clips, result.split.train);

  const std::vector<BatchTensors> val = validation_batches(clips, result.split.held_out, config, sc);

  BatchConfig bc{config.positives, config.negatives_per_positive, sc, config.p_flip, config.p_reverse};
  Rng rng(mix_seed(config.seed, 1));
  const std::uint64_t fp = fnv1a(model.describe());

  Loop loop;
  loop.params = &model.params;
  loop.schedule = config.schedule;
  loop.momentum = config.momentum;
  loop.log_interval = config.log_interval;
  loop.eval_interval = config.checkpoint_interval;
  loop.max_bad_steps = config.max_bad_steps;
  loop.hooks = &hooks;
  loop.step = [&](int) {
    const BatchTensors b = stack(make_batch(train, bc, rng));
    Graph g;
    Var scores = model.forward(g, g.input(b.patch_a), g.input(b.patch_b), g.input(b.flow_block));
    Var loss = g.softmax_cross_entropy(scores, b.labels);
    const float value = g.value(loss)[0];
    if (!std::isfinite(value)) throw NonFiniteError("non-finite loss");
    g.backward(loss);
    return value;
  };
  loop.evaluate = [&] { return static_cast<float>(binary_accuracy(model, val)); };
  loop.snapshot = [&](const std::vector<HistoryRecord>& h) { return make_checkpoint(model.params, fp, h); };
  loop.run();

  result.checkpoint = make_checkpoint(model.params, fp, loop.history);
  result.final_val_acc = loop.last_eval;
  result.steps = loop.steps;
  result.skipped_steps = loop.skipped;
  return result;
}

PoseTrainConfig PoseTrainConfig::preset(const std::string& name) {
  PoseTrainConfig c;
  if (name == "mini") {
    c.crop = PoseCropConfig{3.5f, 64, 16, 1, 1};
    c.schedule = {{3e-2f, 300}};
    c.decode_top_k = 9;
    c.batch_size = 16;
    return c;
  }
  if (name == "paper") {
    c.crop = PoseCropConfig{1.5f, 256, 60, 1, 3};
    c.schedule = {{1e-3f, 20000}};
    c.batch_size = 32;
    c.log_interval = 100;
    return c;
  }
  throw ParamError("unknown pose preset '" + name + "' (expected mini or paper)");
}

void PoseTrainConfig::validate() const {
  validate_schedule(schedule);
  if (batch_size < 1 || log_interval < 1) throw ParamError("batch size and log interval must be positive");
  if (!(crop.torso_factor > 0.0f)) throw ParamError("torso factor must be positive");
  if (crop.crop_size < 1 || crop.heatmap_size < 1 || crop.radius < 0) throw ParamError("bad pose crop geometry");
  if (decode_top_k < 1 || decode_top_k > crop.heatmap_size * crop.heatmap_size)
    throw ParamError("decode_top_k must lie in [1, heatmap_size^2]");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ParamError("momentum must lie in [0, 1)");
}

FinetuneResult finetune_pose(const std::vector<VideoClip>& clips, PoseModel& model, const PoseTrainConfig& config,
                             const TrainHooks& hooks) {
  config.validate();
  if (config.crop.crop_size != model.arch.pose_input_size || config.crop.heatmap_size != model.arch.heatmap_size ||
      config.crop.channels != model.arch.in_channels)
    throw ParamError("pose crop geometry does not match the pose network");
  for (const VideoClip& c : clips)
    if (!c.joints()) throw DataError("clip " + c.id() + " has no joint annotations");
  FinetuneResult result;
  result.split = split_clips(clips, config.validation_fraction);
  const std::vector<PoseExample> examples = make_pose_examples(clips, result.split.train, config.crop);
  if (examples.empty()) throw DataError("no pose training examples");

  const int k = model.num_joints;
  const std::size_t img = examples.front().image.numel(), tgt = examples.front().target.numel();
  Shape img_shape = examples.front().image.shape();
  Shape tgt_shape = examples.front().target.shape();
  tgt_shape.insert(tgt_shape.begin(), config.batch_size);
  img_shape[0] = config.batch_size;

  Rng rng(mix_seed(config.seed, 3));
  std::vector<int> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const std::uint64_t fp = fnv1a(model.describe());

  Loop loop;
  loop.params = &model.params;
  loop.schedule = config.schedule;
  loop.momentum = config.momentum;
  loop.log_interval = config.log_interval;
  loop.hooks = &hooks;
  loop.step = [&](int) {
    Tensor images(img_shape), targets(tgt_shape);
    for (int i = 0; i < config.batch_size; ++i) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const PoseExample& ex = examples[order[cursor++]];
      std::copy_n(ex.image.data().begin(), img, images.data().begin() + i * img);
      std::copy_n(ex.target.data().begin(), tgt, targets.data().begin() + i * tgt);
    }
    Tensor weights = reweighting_weights(targets);
    for (float& w : weights.storage()) w /= static_cast<float>(k);
    Graph g;
    Var pred = model.forward(g, g.input(images));
    Var loss = g.euclidean_loss(pred, targets, weights);
    const float value = g.value(loss)[0];
    if (!std::isfinite(value)) throw NonFiniteError("non-finite loss");
    g.backward(loss);
    return value;
  };
  loop.snapshot = [&](const std::vector<HistoryRecord>& h) { return make_checkpoint(model.params, fp, h); };
  loop.run();
  result.checkpoint = make_checkpoint(model.params, fp, loop.history);
  return result;
}

ActionTrainConfig ActionTrainConfig::preset(const std::string& name) {
  ActionTrainConfig c;
  if (name == "mini") return c;
  if (name == "paper") {
    c.schedule = {{1e-3f, 14000}};
    c.batch_size = 256;
    c.crop_size = 224;
    c.channels = 3;
    c.log_interval = 100;
    return c;
  }
  throw ParamError("unknown action preset '" + name + "' (expected mini or paper)");
}

void ActionTrainConfig::validate() const {
  validate_schedule(schedule);
  if (num_classes < 2) throw ParamError("action classification needs at least two classes");
  if (batch_size < 1 || log_interval < 1 || crop_size < 1 || channels < 1)
    throw ParamError("batch size, log interval, crop size and channels must be positive");
  if (train_clip_limit < 0) throw ParamError("train_clip_limit must be non-negative");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ParamError("momentum must lie in [0, 1)");
}

std::vector<int> limit_training_clips(const std::vector<int>& train, int limit, std::uint64_t seed) {
  if (limit <= 0 || limit >= static_cast<int>(train.size())) return train;
  std::vector<int> pool = train;
  Rng rng(mix_seed(seed, 5));
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(limit);
  std::sort(pool.begin(), pool.end());
  return pool;
}

FinetuneResult finetune_action(const std::vector<VideoClip>& clips, ActionModel& model,
                               const ActionTrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (config.num_classes != model.num_classes) throw ParamError("class count does not match the action network");
  if (config.crop_size != model.arch.input_size || config.channels != model.arch.in_channels)
    throw ParamError("action crop geometry does not match the network input");
  for (const VideoClip& c : clips) {
    if (!c.info().label) throw DataError("clip " + c.id() + " has no action label");
    if (*c.info().label < 0 || *c.info().label >= config.num_classes)
      throw DataError("clip " + c.id() + " has label " + std::to_string(*c.info().label) + " but only " +
                      std::to_string(config.num_classes) + " classes are configured");
  }
  FinetuneResult result;
  result.split = split_clips(clips, config.test_fraction);
  result.split.train = limit_training_clips(result.split.train, config.train_clip_limit, config.seed);
  model.freeze_trunk(config.freeze_trunk);

  const int s = config.crop_size;
  const std::size_t per = static_cast<std::size_t>(config.channels) * s * s;
  Rng rng(mix_seed(config.seed, 4));
  const std::uint64_t fp = fnv1a(model.describe());

  Loop loop;
  loop.params = &model.params;
  loop.schedule = config.schedule;
  loop.momentum = config.momentum;
  loop.log_interval = config.log_interval;
  loop.hooks = &hooks;
  loop.step = [&](int) {
    Tensor images({config.batch_size, config.channels, s, s});
    std::vector<int> labels(config.batch_size);
    std::uniform_int_distribution<std::size_t> pick(0, result.split.train.size() - 1);
    std::uniform_real_distribution<float> coin(0.0f, 1.0f);
    for (int i = 0; i < config.batch_size; ++i) {
      const VideoClip& clip = clips[result.split.train[pick(rng)]];
      const int f = std::uniform_int_distribution<int>(0, clip.frame_count() - 1)(rng);
      const GrayImage& frame = clip.frame(f);
      if (frame.width < s || frame.height < s) throw ShapeError("frame smaller than the action crop");
      const int x = std::uniform_int_distribution<int>(0, frame.width - s)(rng);
      const int y = std::uniform_int_distribution<int>(0, frame.height - s)(rng);
      GrayImage c = crop(frame, x, y, s, s);
      if (coin(rng) < 0.5f) c = hflip(c);
      Tensor p = crop_patch(c, 0, 0, s, config.channels);
      std::copy_n(p.data().begin(), per, images.data().begin() + i * per);
      labels[i] = *clip.info().label;
    }
    Graph g;
    Var scores = model.forward(g, g.input(images));
    Var loss = g.softmax_cross_entropy(scores, labels);
    const float value = g.value(loss)[0];
    if (!std::isfinite(value)) throw NonFiniteError("non-finite loss");
    g.backward(loss);
    return value;
  };
  loop.snapshot = [&](const std::vector<HistoryRecord>& h) { return make_checkpoint(model.params, fp, h); };
  loop.run();
  result.checkpoint = make_checkpoint(model.params, fp, loop.history);
  return result;
}

}  // namespace pfm
