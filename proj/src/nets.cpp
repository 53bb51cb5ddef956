#include "pfm/nets.hpp"

#include <algorithm>
#include <sstream>

#include "pfm/errors.hpp"

namespace pfm {

namespace {

int parse_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) throw ParseError("'" + key + "' expects an integer, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ParseError("'" + key + "' expects true/false, got '" + value + "'");
}

std::vector<LayerSpec> trunk(const ArchConfig& cfg, int in_channels, const std::string& prefix, bool pool_last,
                             bool with_fc6, int input_size) {
  std::vector<LayerSpec> layers;
  int channels = in_channels;
  int extent = input_size;
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const ConvStage& st = cfg.stages[s];
    layers.push_back(LayerSpec::conv2d(prefix + ".conv" + std::to_string(s + 1), channels, st.out_channels, st.kernel,
                                       st.stride, st.pad));
    layers.push_back(LayerSpec::relu());
    extent = conv_output_extent(extent, st.kernel, st.stride, st.pad);
    const bool last = s + 1 == cfg.stages.size();
    if (st.pool && (pool_last || !last)) {
      layers.push_back(LayerSpec::max_pool(cfg.pool_kernel, cfg.pool_stride));
      extent = conv_output_extent(extent, cfg.pool_kernel, cfg.pool_stride, 0);
    }
    channels = st.out_channels;
  }
  if (with_fc6) {
    if (extent <= 0) throw ShapeError(prefix + ": input " + std::to_string(input_size) + " collapses before fc6");
    layers.push_back(LayerSpec::fully_connected(prefix + ".fc6", channels * extent * extent, cfg.fc6_dim));
    layers.push_back(LayerSpec::relu());
  }
  return layers;
}

}  // namespace

ArchConfig ArchConfig::preset(const std::string& name) {
  ArchConfig c;
  c.name = name;
  if (name == "vggm-mini") {
    c.stages = {{16, 5, 2, 0, true}, {32, 3, 2, 1, true}, {64, 3, 1, 1, false}, {64, 3, 1, 1, false},
                {64, 3, 1, 1, true}};
    c.pool_kernel = 2;
    c.pool_stride = 2;
    c.fc6_dim = 256;
    c.input_size = 64;
    c.in_channels = 1;
    c.pose_input_size = 64;
    c.heatmap_size = 16;
    c.action_hidden = 128;
  } else if (name == "vggm-paper") {
    c.stages = {{96, 7, 2, 0, true}, {256, 5, 2, 1, true}, {512, 3, 1, 1, false}, {512, 3, 1, 1, false},
                {512, 3, 1, 1, true}};
    c.pool_kernel = 3;
    c.pool_stride = 2;
    c.fc6_dim = 4096;
    c.input_size = 224;
    c.in_channels = 3;
    c.pose_input_size = 256;
    c.heatmap_size = 60;
    c.action_hidden = 2048;
  } else {
    throw NotFoundError("unknown architecture preset '" + name + "' (expected vggm-mini or vggm-paper)");
  }
  return c;
}

void ArchConfig::set(const std::string& key, const std::string& value) {
  if (key == "fc6_dim") fc6_dim = parse_int(key, value);
  else if (key == "input_size") input_size = parse_int(key, value);
  else if (key == "in_channels") in_channels = parse_int(key, value);
  else if (key == "pool_kernel") pool_kernel = parse_int(key, value);
  else if (key == "pool_stride") pool_stride = parse_int(key, value);
  else if (key == "pose_input_size") pose_input_size = parse_int(key, value);
  else if (key == "heatmap_size") heatmap_size = parse_int(key, value);
  else if (key == "action_hidden") action_hidden = parse_int(key, value);
  else if (key.rfind("stage", 0) == 0 && key.find('.') != std::string::npos) {
    const std::string index = key.substr(5, key.find('.') - 5);
    const std::string field = key.substr(key.find('.') + 1);
    const int s = parse_int(key, index);
    if (s < 1 || s > static_cast<int>(stages.size()))
      throw ParamError("'" + key + "': stage index must lie in 1.." + std::to_string(stages.size()));
    ConvStage& st = stages[s - 1];
    if (field == "out_channels") st.out_channels = parse_int(key, value);
    else if (field == "kernel") st.kernel = parse_int(key, value);
    else if (field == "stride") st.stride = parse_int(key, value);
    else if (field == "pad") st.pad = parse_int(key, value);
    else if (field == "pool") st.pool = parse_bool(key, value);
    else throw ParamError("unknown architecture key '" + key + "'");
  } else {
    throw ParamError("unknown architecture key '" + key + "'");
  }
}

void ArchConfig::validate() const {
  if (stages.empty()) throw ParamError("architecture '" + name + "' has no conv stages");
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const ConvStage& st = stages[s];
    if (st.out_channels <= 0 || st.kernel <= 0 || st.stride <= 0 || st.pad < 0)
      throw ParamError("architecture '" + name + "': invalid stage " + std::to_string(s + 1));
  }
  if (fc6_dim <= 0 || input_size <= 0 || in_channels <= 0 || pool_kernel <= 0 || pool_stride <= 0 ||
      pose_input_size <= 0 || heatmap_size <= 0 || action_hidden <= 0)
    throw ParamError("architecture '" + name + "': sizes must be positive");
}

Network::Network(std::string name, Shape input, std::vector<LayerSpec> layers)
    : name_(std::move(name)), input_(std::move(input)), layers_(std::move(layers)) {
  Shape s = input_;
  s.insert(s.begin(), 1);
  for (const LayerSpec& l : layers_) {
    try {
      s = l.output_shape(s);
    } catch (const ShapeError& e) {
      throw ShapeError(name_ + ": " + e.what());
    }
  }
  output_.assign(s.begin() + 1, s.end());
}

void Network::init_params(ParamSet& params, std::mt19937_64& rng) const {
  for (const LayerSpec& l : layers_)
    if (l.parametric()) params.add(l, rng);
}

Var Network::forward(Graph& graph, ParamSet& params, Var x) const {
  return forward_until(graph, params, x, std::string());
}

Var Network::forward_until(Graph& graph, ParamSet& params, Var x, const std::string& last_layer) const {
  const Shape& in = graph.value(x).shape();
  if (in.size() != input_.size() + 1 || !std::equal(input_.begin(), input_.end(), in.begin() + 1))
    throw ShapeError(name_ + ": expected per-sample input " + shape_string(input_) + ", got " + shape_string(in));
  bool stop = false;
  for (const LayerSpec& l : layers_) {
    if (stop && l.kind != LayerKind::kRelu) break;
    x = l.parametric() ? graph.forward(l, params, x) : graph.forward(l, x);
    if (stop) break;
    if (!last_layer.empty() && l.name == last_layer) stop = true;
  }
  if (!last_layer.empty() && !stop) throw NotFoundError(name_ + " has no layer '" + last_layer + "'");
  return x;
}

std::string Network::describe() const {
  std::ostringstream os;
  os << name_ << " input " << shape_string(input_) << '\n';
  for (const LayerSpec& l : layers_) os << l.describe() << '\n';
  return os.str();
}

Network build_appearance_net(const ArchConfig& cfg, const std::string& prefix) {
  cfg.validate();
  return Network(prefix == "app" ? "appearance" : prefix, {cfg.in_channels, cfg.input_size, cfg.input_size},
                 trunk(cfg, cfg.in_channels, prefix, true, true, cfg.input_size));
}

Network build_motion_net(const ArchConfig& cfg, int flow_channels, const std::string& prefix) {
  cfg.validate();
  if (flow_channels <= 0 || flow_channels % 2 != 0)
    throw ParamError("motion net needs an even, positive number of flow channels (2*delta_n), got " +
                     std::to_string(flow_channels));
  return Network(prefix == "mot" ? "motion" : prefix, {flow_channels, cfg.input_size, cfg.input_size},
                 trunk(cfg, flow_channels, prefix, true, true, cfg.input_size));
}

DeconvGeometry solve_deconv(int in, int out) {
  if (in <= 0 || out < in)
    throw ShapeError("cannot upsample a " + std::to_string(in) + " px map to " + std::to_string(out) + " px");
  for (int s = std::max(1, out / in); s >= 1; --s) {
    const int r = out - (in - 1) * s;  // kernel - 2*pad
    if (r < 1) continue;
    int k = std::max(2 * s, r);
    if ((k - r) % 2) ++k;
    const DeconvGeometry g{k, s, (k - r) / 2};
    if (transposed_output_extent(in, g.kernel, g.stride, g.pad) == out) return g;
  }
  throw ShapeError("no transposed convolution maps " + std::to_string(in) + " px to " + std::to_string(out) + " px");
}

JointModel JointModel::build(const ArchConfig& arch, int delta_n, std::uint64_t seed, bool with_params) {
  if (delta_n <= 0) throw ParamError("delta_n must be positive");
  JointModel m;
  m.arch = arch;
  m.delta_n = delta_n;
  m.appearance = build_appearance_net(arch);
  m.motion = build_motion_net(arch, 2 * delta_n);
  const int d = arch.fc6_dim;
  m.fusion = Network("fusion", {3 * d},
                     {LayerSpec::fully_connected("fuse.fc1", 3 * d, d), LayerSpec::relu(),
                      LayerSpec::fully_connected("fuse.fc2", d, 2)});
  if (!with_params) return m;
  std::mt19937_64 rng(seed);
  m.appearance.init_params(m.params, rng);
  m.motion.init_params(m.params, rng);
  m.fusion.init_params(m.params, rng);
  return m;
}

Var JointModel::forward(Graph& graph, Var patch_a, Var patch_b, Var flow_block) {
  const Var fa = appearance.forward(graph, params, patch_a);
  const Var fb = appearance.forward(graph, params, patch_b);
  const Var fm = motion.forward(graph, params, flow_block);
  const Var parts[] = {fa, fb, fm};
  return fusion.forward(graph, params, graph.concat(parts));
}

std::string JointModel::describe() const {
  return "joint delta_n=" + std::to_string(delta_n) + "\n" + appearance.describe() + motion.describe() +
         fusion.describe();
}

Tensor joint_forward(JointModel& model, const TripletSample& sample) {
  Graph g;
  Tensor flow = sample.flow_block;
  if (flow.rank() == 3) flow = flow.reshaped({1, flow.dim(0), flow.dim(1), flow.dim(2)});
  const Var out = model.forward(g, g.input(sample.patch_a), g.input(sample.patch_b), g.input(flow));
  return g.value(out);
}

PoseModel PoseModel::build(const ArchConfig& arch, int num_joints, std::uint64_t seed) {
  arch.validate();
  if (num_joints <= 0) throw ParamError("num_joints must be positive");
  PoseModel m;
  m.arch = arch;
  m.num_joints = num_joints;
  std::vector<LayerSpec> layers = trunk(arch, arch.in_channels, "app", false, false, arch.pose_input_size);
  int extent = arch.pose_input_size;
  for (std::size_t s = 0; s < arch.stages.size(); ++s) {
    const ConvStage& st = arch.stages[s];
    extent = conv_output_extent(extent, st.kernel, st.stride, st.pad);
    if (st.pool && s + 1 < arch.stages.size()) extent = conv_output_extent(extent, arch.pool_kernel, arch.pool_stride, 0);
  }
  if (extent <= 0) throw ShapeError("pose net: input " + std::to_string(arch.pose_input_size) + " collapses in the trunk");
  const DeconvGeometry g = solve_deconv(extent, arch.heatmap_size);
  const int channels = arch.stages.back().out_channels;
  layers.push_back(LayerSpec::transposed_conv2d("pose.deconv", channels, channels, g.kernel, g.stride, g.pad));
  layers.push_back(LayerSpec::relu());
  layers.push_back(LayerSpec::conv2d("pose.heat", channels, num_joints, 1, 1, 0));
  m.net = Network("pose", {arch.in_channels, arch.pose_input_size, arch.pose_input_size}, std::move(layers));
  std::mt19937_64 rng(seed);
  m.net.init_params(m.params, rng);
  return m;
}

ActionModel ActionModel::build(const ArchConfig& arch, int num_classes, int hidden_dim, std::uint64_t seed) {
  arch.validate();
  if (num_classes <= 1) throw ParamError("an action head needs at least two classes");
  if (hidden_dim <= 0) throw ParamError("hidden_dim must be positive");
  ActionModel m;
  m.arch = arch;
  m.num_classes = num_classes;
  std::vector<LayerSpec> layers = trunk(arch, arch.in_channels, "app", true, true, arch.input_size);
  layers.push_back(LayerSpec::fully_connected("act.fc7", arch.fc6_dim, hidden_dim));
  layers.push_back(LayerSpec::relu());
  layers.push_back(LayerSpec::fully_connected("act.fc8", hidden_dim, num_classes));
  m.net = Network("action", {arch.in_channels, arch.input_size, arch.input_size}, std::move(layers));
  std::mt19937_64 rng(seed);
  m.net.init_params(m.params, rng);
  return m;
}

void ActionModel::freeze_trunk(bool frozen) { params.set_frozen("app.", frozen); }

std::vector<std::string> trunk_layer_names(const ArchConfig& arch, bool include_fc6, const std::string& prefix) {
  std::vector<std::string> out;
  for (std::size_t s = 0; s < arch.stages.size(); ++s) out.push_back(prefix + ".conv" + std::to_string(s + 1));
  if (include_fc6) out.push_back(prefix + ".fc6");
  return out;
}

void transfer_layers(const ParamSet& source, ParamSet& target, const std::vector<std::string>& names) {
  std::vector<std::string> problems;
  for (const std::string& n : names) {
    if (!source.contains(n)) {
      problems.push_back(n + " (missing in source)");
      continue;
    }
    if (!target.contains(n)) {
      problems.push_back(n + " (missing in target)");
      continue;
    }
    const LayerParams& s = source.at(n);
    const LayerParams& t = target.at(n);
    if (s.weight.shape() != t.weight.shape() || s.bias.shape() != t.bias.shape())
      problems.push_back(n + " (source " + shape_string(s.weight.shape()) + " vs target " +
                         shape_string(t.weight.shape()) + ")");
  }
  if (!problems.empty()) {
    std::string msg = "cannot transfer layers:";
    for (const std::string& p : problems) msg += " " + p + ";";
    msg.pop_back();
    throw TransferError(msg);
  }
  for (const std::string& n : names) {
    LayerParams& t = target.at(n);
    const LayerParams& s = source.at(n);
    t.weight.storage() = s.weight.storage();
    t.bias.storage() = s.bias.storage();
    std::fill(t.weight_velocity.data().begin(), t.weight_velocity.data().end(), 0.0f);
    std::fill(t.bias_velocity.data().begin(), t.bias_velocity.data().end(), 0.0f);
  }
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace pfm
