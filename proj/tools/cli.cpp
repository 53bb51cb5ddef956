#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pfm/checkpoint.hpp"
#include "pfm/corpus.hpp"
#include "pfm/errors.hpp"
#include "pfm/flow.hpp"
#include "pfm/metrics.hpp"
#include "pfm/parallel.hpp"
#include "pfm/pose.hpp"
#include "pfm/trainer.hpp"
#include "pfm/viz.hpp"

namespace pfm::cli {

namespace fs = std::filesystem;

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find_first_of("= \t") != std::string::npos) throw ParseError("bad config key '" + key + "'");
  values_[key] = value;
}

void RunConfig::merge_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open config " + path.string());
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string() + ":" + std::to_string(n) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::write(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::string RunConfig::str(const std::string& key, const std::string& fallback) {
  read_.insert(key);
  auto [it, inserted] = values_.try_emplace(key, fallback);
  return it->second;
}

int RunConfig::integer(const std::string& key, int fallback) {
  const std::string v = str(key, std::to_string(fallback));
  try {
    std::size_t used = 0;
    const int r = std::stoi(v, &used);
    if (used == v.size()) return r;
  } catch (const std::exception&) {
  }
  throw ParseError("config key " + key + " expects an integer, got '" + v + "'");
}

namespace {

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.7g", v);
  return buf;
}

}  // namespace

double RunConfig::real(const std::string& key, double fallback) {
  const std::string v = str(key, format_real(fallback));
  try {
    std::size_t used = 0;
    const double r = std::stod(v, &used);
    if (used == v.size()) return r;
  } catch (const std::exception&) {
  }
  throw ParseError("config key " + key + " expects a number, got '" + v + "'");
}

bool RunConfig::flag(const std::string& key, bool fallback) {
  const std::string v = str(key, fallback ? "true" : "false");
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError("config key " + key + " expects true or false, got '" + v + "'");
}

std::map<std::string, std::string> RunConfig::section(const std::string& prefix) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : values_)
    if (k.rfind(prefix, 0) == 0) {
      read_.insert(k);
      out[k] = v;
    }
  return out;
}

std::vector<std::string> RunConfig::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!read_.count(k)) out.push_back(k);
  return out;
}

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : std::string(1, sep)) + s;
  return out;
}

std::string format_schedule(const std::vector<LrStage>& schedule) {
  std::vector<std::string> parts;
  for (const LrStage& s : schedule) parts.push_back(format_real(s.lr) + ":" + std::to_string(s.iterations));
  return join(parts, ',');
}

std::vector<LrStage> parse_schedule(const std::string& key, const std::string& text) {
  std::vector<LrStage> out;
  for (const std::string& part : split(text, ',')) {
    const auto colon = part.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument("missing ':'");
      out.push_back({std::stof(part.substr(0, colon)), std::stoi(part.substr(colon + 1))});
    } catch (const std::exception&) {
      throw ParseError("config key " + key + " expects lr:iterations[,lr:iterations...], got '" + text + "'");
    }
  }
  validate_schedule(out);
  return out;
}

std::vector<LrStage> schedule_key(RunConfig& c, const std::string& key, const std::vector<LrStage>& fallback) {
  return parse_schedule(key, c.str(key, format_schedule(fallback)));
}


// Every module configuration, resolved from one RunConfig.
struct Settings {
  std::uint64_t seed = 1;
  int workers = 1;
  ArchConfig arch;
  int delta_n = 4;
  CorpusConfig corpus;
  FlowParams flow;
  TrainConfig train;
  PoseTrainConfig pose;
  ActionTrainConfig action;
  ActionProtocol protocol;
  NnProbeConfig probe;
  SkeletonEval skel;
};

Settings resolve(RunConfig& c) {
  Settings s;
  const std::string seed = c.str("seed", "1");
  try {
    std::size_t used = 0;
    s.seed = std::stoull(seed, &used);
    if (used != seed.size()) throw std::invalid_argument(seed);
  } catch (const std::exception&) {
    throw ParseError("seed must be a non-negative integer, got '" + seed + "'");
  }
  s.workers = c.integer("workers", 1);
  if (s.workers < 1) throw ParamError("workers must be at least 1");

  s.arch = ArchConfig::preset(c.str("preset.arch", "vggm-mini"));
  for (const auto& [k, v] : c.section("arch.")) s.arch.set(k.substr(5), v);
  ArchConfig& ar = s.arch;
  for (auto [key, field] : {std::pair{"fc6_dim", &ar.fc6_dim}, {"input_size", &ar.input_size},
                            {"in_channels", &ar.in_channels}, {"pool_kernel", &ar.pool_kernel},
                            {"pool_stride", &ar.pool_stride}, {"pose_input_size", &ar.pose_input_size},
                            {"heatmap_size", &ar.heatmap_size}, {"action_hidden", &ar.action_hidden}})
    c.integer(std::string("arch.") + key, *field);
  for (std::size_t i = 0; i < ar.stages.size(); ++i) {
    const std::string p = "arch.stage" + std::to_string(i + 1) + ".";
    const ConvStage& st = ar.stages[i];
    c.integer(p + "out_channels", st.out_channels);
    c.integer(p + "kernel", st.kernel);
    c.integer(p + "stride", st.stride);
    c.integer(p + "pad", st.pad);
    c.flag(p + "pool", st.pool);
  }
  ar.validate();

  s.corpus.num_clips = c.integer("corpus.clips", s.corpus.num_clips);
  s.corpus.frames_per_clip = c.integer("corpus.frames", s.corpus.frames_per_clip);
  s.corpus.frame_size = c.integer("corpus.size", s.corpus.frame_size);
  s.corpus.actions = split(c.str("corpus.actions", join(s.corpus.actions, ',')), ',');
  s.corpus.jitter.phase = static_cast<float>(c.real("corpus.jitter.phase", s.corpus.jitter.phase));
  s.corpus.jitter.amplitude = static_cast<float>(c.real("corpus.jitter.amplitude", s.corpus.jitter.amplitude));
  s.corpus.jitter.position = static_cast<float>(c.real("corpus.jitter.position", s.corpus.jitter.position));
  s.corpus.jitter.velocity = static_cast<float>(c.real("corpus.jitter.velocity", s.corpus.jitter.velocity));
  s.delta_n = c.integer("delta_n", s.delta_n);
  if (s.delta_n < 1) throw ParamError("delta_n must be positive");
  s.corpus.delta_n = s.delta_n;
  s.corpus.workers = s.workers;

  s.flow.alpha = static_cast<float>(c.real("flow.alpha", s.flow.alpha));
  s.flow.iterations = c.integer("flow.iterations", s.flow.iterations);
  s.flow.pyramid_levels = c.integer("flow.pyramid_levels", s.flow.pyramid_levels);
  s.flow.warps = c.integer("flow.warps", s.flow.warps);

  TrainConfig& t = s.train;
  t = TrainConfig::preset(c.str("preset.train", "mini"));
  t.seed = s.seed;
  t.positives = c.integer("train.positives", t.positives);
  t.negatives_per_positive = c.integer("train.negatives_per_positive", t.negatives_per_positive);
  t.schedule = schedule_key(c, "train.schedule", t.schedule);
  t.momentum = static_cast<float>(c.real("train.momentum", t.momentum));
  t.checkpoint_interval = c.integer("train.checkpoint_interval", t.checkpoint_interval);
  t.log_interval = c.integer("train.log_interval", t.log_interval);
  t.validation_fraction = c.real("train.validation_fraction", t.validation_fraction);
  t.validation_samples = c.integer("train.validation_samples", t.validation_samples);
  t.p_flip = static_cast<float>(c.real("train.p_flip", t.p_flip));
  t.p_reverse = static_cast<float>(c.real("train.p_reverse", t.p_reverse));
  t.max_bad_steps = c.integer("train.max_bad_steps", t.max_bad_steps);
  t.validate();

  PoseTrainConfig& p = s.pose;
  p = PoseTrainConfig::preset(c.str("preset.pose", "mini"));
  p.seed = s.seed;
  p.crop.crop_size = s.arch.pose_input_size;
  p.crop.heatmap_size = s.arch.heatmap_size;
  p.crop.channels = s.arch.in_channels;
  p.crop.torso_factor = static_cast<float>(c.real("pose.torso_factor", p.crop.torso_factor));
  p.crop.radius = c.integer("pose.radius", p.crop.radius);
  p.schedule = schedule_key(c, "pose.schedule", p.schedule);
  p.momentum = static_cast<float>(c.real("pose.momentum", p.momentum));
  p.batch_size = c.integer("pose.batch_size", p.batch_size);
  p.log_interval = c.integer("pose.log_interval", p.log_interval);
  p.validation_fraction = c.real("pose.validation_fraction", p.validation_fraction);
  p.decode_top_k = c.integer("pose.decode_top_k", p.decode_top_k);
  p.validate();

  ActionTrainConfig& a = s.action;
  a = ActionTrainConfig::preset(c.str("preset.action", "mini"));
  a.seed = s.seed;
  a.crop_size = s.arch.input_size;
  a.channels = s.arch.in_channels;
  a.num_classes = c.integer("action.num_classes", static_cast<int>(s.corpus.actions.size()));
  a.freeze_trunk = c.flag("action.freeze_trunk", a.freeze_trunk);
  a.schedule = schedule_key(c, "action.schedule", a.schedule);
  a.momentum = static_cast<float>(c.real("action.momentum", a.momentum));
  a.batch_size = c.integer("action.batch_size", a.batch_size);
  a.train_clip_limit = c.integer("action.train_clip_limit", a.train_clip_limit);
  a.log_interval = c.integer("action.log_interval", a.log_interval);
  a.test_fraction = c.real("action.test_fraction", a.test_fraction);
  a.validate();
  s.protocol.num_frames = c.integer("action.eval.num_frames", s.protocol.num_frames);
  s.protocol.corners = c.flag("action.eval.corners", s.protocol.corners);
  s.protocol.flips = c.flag("action.eval.flips", s.protocol.flips);
  s.protocol.crop_size = a.crop_size;
  s.protocol.channels = a.channels;
  if (s.protocol.num_frames < 1) throw ParamError("action.eval.num_frames must be positive");

  s.probe.num_queries = c.integer("probe.num_queries", s.probe.num_queries);
  s.probe.frame_stride = c.integer("probe.frame_stride", s.probe.frame_stride);
  s.probe.permutations = c.integer("probe.permutations", s.probe.permutations);
  s.probe.crop_size = s.arch.input_size;
  s.probe.channels = s.arch.in_channels;

  s.skel = SkeletonEval::standard();
  s.skel.alpha = static_cast<float>(c.real("eval.pcp_alpha", s.skel.alpha));
  s.skel.thresholds.clear();
  for (const std::string& v : split(c.str("eval.pdj_thresholds", "0.1,0.2,0.3,0.4"), ',')) {
    try {
      s.skel.thresholds.push_back(std::stof(v));
    } catch (const std::exception&) {
      throw ParseError("eval.pdj_thresholds expects comma-separated numbers");
    }
  }
  s.skel.validate();
  return s;
}

// Command-line state shared by every subcommand.
struct Options {
  std::string config_file;
  std::vector<std::string> sets;
  std::string seed;
  int workers = 0;
  std::string preset;
  std::string out;
  std::string corpus;
  std::string ckpt;
  std::string init = "random";
  int clips = 0;
  int frames = 0;
  int size = 0;
  std::string layer = "app.conv1";
  int channel = 0;
  int scale = 4;
  std::string clip;
  int frame = 0;
  double max_magnitude = 0.0;
};

const std::map<std::string, std::string> kCheckpointConfigs = {
    {"unsup", "train-unsup.config"}, {"pose", "finetune-pose.config"}, {"action", "finetune-action.config"}};

// Settings of the run that produced a checkpoint, when saved beside it.
void merge_checkpoint_config(RunConfig& c, const fs::path& ckpt) {
  const auto it = kCheckpointConfigs.find(ckpt.stem().string());
  if (it == kCheckpointConfigs.end()) return;
  const fs::path cfg = ckpt.parent_path() / it->second;
  if (!fs::exists(cfg)) return;
  RunConfig saved;
  saved.merge_file(cfg);
  for (const auto& [k, v] : saved.values()) c.set(k, v);
}

struct Prepared {
  RunConfig config;
  Settings settings;
};

Prepared prepare(const std::string& command, const Options& o, const fs::path& config_dir) {
  Prepared p;
  RunConfig& c = p.config;
  if (!o.ckpt.empty()) merge_checkpoint_config(c, o.ckpt);
  if (!o.config_file.empty()) c.merge_file(o.config_file);
  for (const std::string& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ParseError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.seed.empty()) c.set("seed", o.seed);
  if (o.workers > 0) c.set("workers", std::to_string(o.workers));
  if (!o.preset.empty()) {
    if (o.preset != "mini" && o.preset != "paper") throw ParamError("--preset must be mini or paper");
    c.set("preset.arch", "vggm-" + o.preset);
    for (const char* k : {"preset.train", "preset.pose", "preset.action"}) c.set(k, o.preset);
  }
  if (o.clips > 0) c.set("corpus.clips", std::to_string(o.clips));
  if (o.frames > 0) c.set("corpus.frames", std::to_string(o.frames));
  if (o.size > 0) c.set("corpus.size", std::to_string(o.size));
  p.settings = resolve(c);
  const auto unused = c.unused();
  if (!unused.empty()) throw ParamError("unknown config keys: " + join(unused, ','));
  fs::create_directories(config_dir);
  c.write(config_dir / (command + ".config"));
  return p;
}

void update_metrics(const fs::path& dir, const std::map<std::string, double>& values) {
  const fs::path path = dir / "metrics.kv";
  std::map<std::string, double> merged = fs::exists(path) ? read_metrics_kv(path) : std::map<std::string, double>{};
  for (const auto& [k, v] : values) merged[k] = v;
  write_metrics_kv(path, merged);
}

std::string threshold_key(float t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f", t);
  return buf;
}

std::vector<VideoClip> load_corpus(const Options& o, const Settings& s) {
  if (o.corpus.empty()) throw ParamError("--corpus is required");
  return load_all(ingest_frames(o.corpus), s.workers);
}

Checkpoint read_checkpoint(const std::string& path) {
  if (path.empty()) throw ParamError("--ckpt is required");
  return load_checkpoint(path);
}

void init_trunk(const std::string& init, ParamSet& params, const std::vector<std::string>& names, std::ostream& out) {
  if (init == "random") return;
  transfer_layers(params_from_checkpoint(load_checkpoint(init)), params, names);
  out << "initialised " << names.size() << " layers from " << init << '\n';
}

void report_pose(PoseModel& model, const std::vector<VideoClip>& clips, const std::vector<int>& held_out,
                 const Settings& s, const fs::path& dir, std::ostream& out) {
  const PoseEvaluation ev = evaluate_pose(model, clips, held_out, s.pose.crop, s.pose.decode_top_k, s.skel);
  const std::string tables = format_pcp_table(ev.pcp) + "\n" + format_pdj_table(ev.pdj);
  out << tables;
  std::ofstream(dir / "pose_eval.txt") << tables;
  write_ppm(dir / "pdj_curve.ppm", plot_pdj_curve(ev.pdj));
  std::map<std::string, double> kv;
  for (const auto& [group, total] : ev.pcp.total) kv["pcp." + group] = ev.pcp.accuracy(group);
  for (int j = 0; j < s.skel.num_joints; ++j)
    for (std::size_t t = 0; t < ev.pdj.thresholds.size(); ++t)
      kv["pdj." + std::string(joint_name(j)) + "." + threshold_key(ev.pdj.thresholds[t])] = ev.pdj.rate(j, t);
  for (std::size_t t = 0; t < ev.pdj.thresholds.size(); ++t)
    kv["pdj.mean." + threshold_key(ev.pdj.thresholds[t])] = ev.pdj.mean_rate(t);
  update_metrics(dir, kv);
}

void report_action(ActionModel& model, const std::vector<VideoClip>& clips, const std::vector<int>& test,
                   const Settings& s, const fs::path& dir, std::ostream& out) {
  const ActionEvaluation ev = evaluate_action(score_fn(model), clips, test, s.protocol);
  char buf[96];
  std::snprintf(buf, sizeof buf, "action_acc=%.4f correct=%d clips=%d samples_per_clip=%d\n", ev.accuracy(), ev.correct,
                ev.total, s.protocol.samples_per_video());
  out << buf;
  update_metrics(dir, {{"action_acc", ev.accuracy()}});
}

TrainHooks logging_hooks(const fs::path& log_path, std::ostream& out) {
  auto log = std::make_shared<std::ofstream>(log_path);
  if (!*log) throw IoError("cannot write " + log_path.string());
  TrainHooks hooks;
  hooks.on_record = [log, &out](const HistoryRecord& r) {
    char buf[96];
    if (std::isnan(r.val_acc))
      std::snprintf(buf, sizeof buf, "iter=%u loss=%.6f\n", r.iteration, r.loss);
    else
      std::snprintf(buf, sizeof buf, "iter=%u loss=%.6f val_acc=%.4f\n", r.iteration, r.loss, r.val_acc);
    out << buf << std::flush;
    *log << buf << std::flush;
  };
  return hooks;
}

int corpus_gen(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw ParamError("--out is required");
  Prepared p = prepare("corpus-gen", o, o.out);
  const Corpus corpus = generate_corpus(o.out, p.settings.corpus, p.settings.seed);
  out << "clips=" << corpus.size() << " frames=" << p.settings.corpus.frames_per_clip << " root=" << o.out << '\n';
  return 0;
}

int flow_precompute(const Options& o, std::ostream& out) {
  if (o.corpus.empty()) throw ParamError("--corpus is required");
  Prepared p = prepare("flow-precompute", o, o.corpus);
  FlowReport report;
  precompute_flows(ingest_frames(o.corpus), p.settings.flow, p.settings.workers, &report);
  for (const std::string& w : report.warnings) out << "warning: " << w << '\n';
  out << "written=" << report.written << " skipped=" << report.skipped << '\n';
  return 0;
}

int train_unsup(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw ParamError("--out is required");
  Prepared p = prepare("train-unsup", o, o.out);
  const Settings& s = p.settings;
  const std::vector<VideoClip> clips = load_corpus(o, s);
  JointModel model = JointModel::build(s.arch, s.delta_n, s.seed);
  TrainHooks hooks = logging_hooks(fs::path(o.out) / "train.log", out);
  hooks.checkpoint_path = fs::path(o.out) / "unsup.mpck";
  const TrainResult r = train_unsupervised(clips, model, s.train, hooks);
  save_checkpoint(hooks.checkpoint_path, r.checkpoint);
  const double chance = static_cast<double>(s.train.negatives_per_positive) / (1 + s.train.negatives_per_positive);
  char buf[96];
  std::snprintf(buf, sizeof buf, "final val_acc=%.4f chance=%.3f steps=%d\n", r.final_val_acc, chance, r.steps);
  out << buf;
  update_metrics(o.out, {{"binary_acc", r.final_val_acc}});
  return 0;
}

int finetune_pose_cmd(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw ParamError("--out is required");
  Prepared p = prepare("finetune-pose", o, o.out);
  const Settings& s = p.settings;
  const std::vector<VideoClip> clips = load_corpus(o, s);
  PoseModel model = PoseModel::build(s.arch, kNumJoints, s.seed);
  init_trunk(o.init, model.params, trunk_layer_names(s.arch, false), out);
  const FinetuneResult r = finetune_pose(clips, model, s.pose, logging_hooks(fs::path(o.out) / "train.log", out));
  save_checkpoint(fs::path(o.out) / "pose.mpck", r.checkpoint);
  report_pose(model, clips, r.split.held_out, s, o.out, out);
  return 0;
}

int eval_pose(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = read_checkpoint(o.ckpt);
  const fs::path dir = o.out.empty() ? fs::path(o.ckpt).parent_path() : fs::path(o.out);
  Prepared p = prepare("eval-pose", o, dir);
  const Settings& s = p.settings;
  PoseModel model = PoseModel::build(s.arch, kNumJoints, s.seed);
  restore_params(ckpt, model.params, fnv1a(model.describe()));
  const std::vector<VideoClip> clips = load_corpus(o, s);
  report_pose(model, clips, split_clips(clips, s.pose.validation_fraction).held_out, s, dir, out);
  return 0;
}

int finetune_action_cmd(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw ParamError("--out is required");
  Prepared p = prepare("finetune-action", o, o.out);
  const Settings& s = p.settings;
  const std::vector<VideoClip> clips = load_corpus(o, s);
  ActionModel model = ActionModel::build(s.arch, s.action.num_classes, s.arch.action_hidden, s.seed);
  init_trunk(o.init, model.params, trunk_layer_names(s.arch, true), out);
  const FinetuneResult r = finetune_action(clips, model, s.action, logging_hooks(fs::path(o.out) / "train.log", out));
  save_checkpoint(fs::path(o.out) / "action.mpck", r.checkpoint);
  out << "train_clips=" << r.split.train.size() << " test_clips=" << r.split.held_out.size() << '\n';
  report_action(model, clips, r.split.held_out, s, o.out, out);
  return 0;
}

int eval_action(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = read_checkpoint(o.ckpt);
  const fs::path dir = o.out.empty() ? fs::path(o.ckpt).parent_path() : fs::path(o.out);
  Prepared p = prepare("eval-action", o, dir);
  const Settings& s = p.settings;
  ActionModel model = ActionModel::build(s.arch, s.action.num_classes, s.arch.action_hidden, s.seed);
  restore_params(ckpt, model.params, fnv1a(model.describe()));
  const std::vector<VideoClip> clips = load_corpus(o, s);
  report_action(model, clips, split_clips(clips, s.action.test_fraction).held_out, s, dir, out);
  return 0;
}

int probe_nn(const Options& o, std::ostream& out) {
  fs::path dir = o.out;
  if (dir.empty()) {
    if (o.ckpt.empty()) throw ParamError("--out is required without --ckpt");
    dir = fs::path(o.ckpt).parent_path();
  }
  Prepared p = prepare("probe-nn", o, dir);
  const Settings& s = p.settings;
  const Network net = build_appearance_net(s.arch);
  ParamSet params;
  std::mt19937_64 init(s.seed);
  net.init_params(params, init);
  if (!o.ckpt.empty())
    transfer_layers(params_from_checkpoint(read_checkpoint(o.ckpt)), params, trunk_layer_names(s.arch, true));
  const std::vector<VideoClip> clips = load_corpus(o, s);
  std::mt19937_64 rng(mix_seed(s.seed, 6));
  const NnProbeReport r = nn_probe(net, params, clips, s.probe, rng);
  char buf[160];
  std::snprintf(buf, sizeof buf, "nn_distance=%.4f random_distance=%.4f p_value=%.5f queries=%d\n",
                r.neighbor_distance, r.random_distance, r.p_value, r.queries);
  out << buf;
  update_metrics(dir, {{"nn.neighbor_distance", r.neighbor_distance},
                       {"nn.random_distance", r.random_distance},
                       {"nn.p_value", r.p_value}});
  return 0;
}

fs::path output_file(const Options& o) {
  if (o.out.empty()) throw ParamError("--out is required");
  const fs::path f = o.out;
  return f.has_parent_path() ? f.parent_path() : fs::path(".");
}

int viz_filters(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = read_checkpoint(o.ckpt);
  prepare("viz-filters", o, output_file(o));
  const Tensor& w = ckpt.tensor(o.layer + ".weight");
  write_pgm(o.out, filter_grid(w, o.channel, o.scale));
  out << "filters=" << w.dim(0) << " kernel=" << w.dim(2) << " image=" << o.out << '\n';
  return 0;
}

int viz_flow(const Options& o, std::ostream& out) {
  if (o.clip.empty()) throw ParamError("--clip is required");
  Prepared p = prepare("viz-flow", o, output_file(o));
  const VideoClip clip = load_clip(ingest_frames(o.corpus.empty() ? throw ParamError("--corpus is required") : o.corpus), o.clip);
  if (o.frame < 0 || o.frame + 1 >= clip.frame_count())
    throw ParamError("--frame must leave a following frame (clip has " + std::to_string(clip.frame_count()) + ")");
  const FlowField field = clip.info().has_flows ? clip.flow(o.frame)
                                                : estimate_flow(clip.frame(o.frame), clip.frame(o.frame + 1), p.settings.flow);
  const float scale = o.max_magnitude > 0.0 ? static_cast<float>(o.max_magnitude) : std::max(field.max_magnitude(), 1e-6f);
  write_ppm(o.out, flow_to_color(field, scale));
  char buf[96];
  std::snprintf(buf, sizeof buf, "max_magnitude=%.4f image=%s\n", field.max_magnitude(), o.out.c_str());
  out << buf;
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised video representation learning pipeline", "pfm"};
  app.require_subcommand(1, 1);
  Options o;
  struct Command {
    CLI::App* app;
    int (*fn)(const Options&, std::ostream&);
  };
  std::vector<Command> commands;
  auto add = [&](const std::string& name, const std::string& help, int (*fn)(const Options&, std::ostream&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config_file, "key=value settings file");
    sub->add_option("--set", o.sets, "override one setting (key=value), repeatable");
    sub->add_option("--seed", o.seed, "seed for all randomness");
    sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--preset", o.preset, "mini or paper");
    commands.push_back({sub, fn});
    return sub;
  };
  CLI::App* gen = add("corpus-gen", "render the synthetic corpus", corpus_gen);
  gen->add_option("--out", o.out, "corpus directory")->required();
  gen->add_option("--clips", o.clips, "number of clips");
  gen->add_option("--frames", o.frames, "frames per clip");
  gen->add_option("--size", o.size, "frame size in pixels");
  add("flow-precompute", "compute and store optical flow", flow_precompute)
      ->add_option("--corpus", o.corpus, "corpus directory")
      ->required();
  CLI::App* train = add("train-unsup", "train the joint model on the surrogate task", train_unsup);
  train->add_option("--corpus", o.corpus)->required();
  train->add_option("--out", o.out, "run directory")->required();
  for (auto [name, fn] : {std::pair{"finetune-pose", finetune_pose_cmd}, std::pair{"finetune-action", finetune_action_cmd}}) {
    CLI::App* sub = add(name, std::string(name == std::string("finetune-pose") ? "pose" : "action") + " fine-tuning", fn);
    sub->add_option("--corpus", o.corpus)->required();
    sub->add_option("--out", o.out, "run directory")->required();
    sub->add_option("--init", o.init, "checkpoint to transfer the trunk from, or 'random'");
  }
  for (auto [name, fn] : {std::pair{"eval-pose", eval_pose}, std::pair{"eval-action", eval_action}}) {
    CLI::App* sub = add(name, "evaluate a fine-tuned checkpoint on the held-out clips", fn);
    sub->add_option("--corpus", o.corpus)->required();
    sub->add_option("--ckpt", o.ckpt)->required();
    sub->add_option("--out", o.out, "report directory (default: beside the checkpoint)");
  }
  CLI::App* probe = add("probe-nn", "nearest-neighbour pose probe on appearance features", probe_nn);
  probe->add_option("--corpus", o.corpus)->required();
  probe->add_option("--ckpt", o.ckpt, "checkpoint with appearance layers (omit for random weights)");
  probe->add_option("--out", o.out, "report directory");
  CLI::App* filters = add("viz-filters", "write a first-layer filter grid", viz_filters);
  filters->add_option("--ckpt", o.ckpt)->required();
  filters->add_option("--out", o.out, "PGM image path")->required();
  filters->add_option("--layer", o.layer, "conv layer name");
  filters->add_option("--channel", o.channel, "input channel to show");
  filters->add_option("--scale", o.scale, "pixels per weight");
  CLI::App* flow = add("viz-flow", "write a colour-coded flow field", viz_flow);
  flow->add_option("--corpus", o.corpus)->required();
  flow->add_option("--clip", o.clip)->required();
  flow->add_option("--frame", o.frame, "first frame of the pair");
  flow->add_option("--out", o.out, "PPM image path")->required();
  flow->add_option("--max-magnitude", o.max_magnitude, "flow magnitude mapped to full saturation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  try {
    for (const Command& c : commands)
      if (c.app->parsed()) return c.fn(o, out);
    err << app.help();
    return 1;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace pfm::cli
