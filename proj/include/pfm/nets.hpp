#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pfm/graph.hpp"
#include "pfm/layers.hpp"
#include "pfm/params.hpp"
#include "pfm/sampler.hpp"

namespace pfm {

struct ConvStage {
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 0;
  bool pool = false;
};

struct ArchConfig {
  std::string name;
  std::vector<ConvStage> stages;
  int pool_kernel = 2;
  int pool_stride = 2;
  int fc6_dim = 256;
  int input_size = 64;
  int in_channels = 1;
  // Pose net geometry.
  int pose_input_size = 64;
  int heatmap_size = 16;
  // Hidden width of the action head.
  int action_hidden = 128;

  // "vggm-mini" or "vggm-paper".
  static ArchConfig preset(const std::string& name);
  // Applies one override such as "fc6_dim=128" or "stage3.out_channels=32".
  void set(const std::string& key, const std::string& value);
  void validate() const;
};

// Feed-forward chain of layers whose shapes are checked when it is built.
class Network {
 public:
  Network() = default;
  // `input` is the per-sample shape (without batch dimension).
  Network(std::string name, Shape input, std::vector<LayerSpec> layers);

  const std::string& name() const { return name_; }
  const Shape& input_shape() const { return input_; }
  const Shape& output_shape() const { return output_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  void init_params(ParamSet& params, std::mt19937_64& rng) const;
  // Shape errors name the network.
  Var forward(Graph& graph, ParamSet& params, Var x) const;
  // Activations after the named layer (and its trailing relu, if any).
  Var forward_until(Graph& graph, ParamSet& params, Var x, const std::string& last_layer) const;
  std::string describe() const;

 private:
  std::string name_;
  Shape input_;
  Shape output_;
  std::vector<LayerSpec> layers_;
};

// Conv stages, pools, fc6 and its relu; layers named <prefix>.conv1 ... <prefix>.fc6.
Network build_appearance_net(const ArchConfig& cfg, const std::string& prefix = "app");
// Same trunk with `flow_channels` input planes.
Network build_motion_net(const ArchConfig& cfg, int flow_channels, const std::string& prefix = "mot");

struct DeconvGeometry {
  int kernel = 0;
  int stride = 0;
  int pad = 0;
};
// Transposed convolution mapping `in` to exactly `out` pixels: the largest
// stride that fits, a kernel of at least twice the stride so neighbouring
// output cells overlap, and padding to trim the excess.
DeconvGeometry solve_deconv(int in, int out);

struct JointModel {
  ArchConfig arch;
  int delta_n = 0;
  Network appearance;
  Network motion;
  Network fusion;
  ParamSet params;

  // `with_params = false` builds only the shape-checked description.
  static JointModel build(const ArchConfig& arch, int delta_n, std::uint64_t seed, bool with_params = true);
  // Two-class scores (N x 2) for batched inputs.
  Var forward(Graph& graph, Var patch_a, Var patch_b, Var flow_block);
  int concat_dim() const { return 3 * arch.fc6_dim; }
  std::string describe() const;
};

// Scores for one sample, without gradients.
Tensor joint_forward(JointModel& model, const TripletSample& sample);

struct PoseModel {
  ArchConfig arch;
  int num_joints = 0;
  Network net;
  ParamSet params;

  // Random initialisation; use transfer_layers to seed the trunk.
  static PoseModel build(const ArchConfig& arch, int num_joints, std::uint64_t seed);
  Var forward(Graph& graph, Var images) { return net.forward(graph, params, images); }
  std::string describe() const { return net.describe(); }
};

struct ActionModel {
  ArchConfig arch;
  int num_classes = 0;
  Network net;
  ParamSet params;

  static ActionModel build(const ArchConfig& arch, int num_classes, int hidden_dim, std::uint64_t seed);
  Var forward(Graph& graph, Var images) { return net.forward(graph, params, images); }
  // Only the two classifier layers train.
  void freeze_trunk(bool frozen);
  std::string describe() const { return net.describe(); }
};

// Names of the transferable trunk layers: conv1..convN (and fc6 if asked).
std::vector<std::string> trunk_layer_names(const ArchConfig& arch, bool include_fc6, const std::string& prefix = "app");

// Copies the named layers from `source` into `target`. Throws TransferError
// listing every missing or shape-mismatched layer; nothing is copied then.
void transfer_layers(const ParamSet& source, ParamSet& target, const std::vector<std::string>& names);

// FNV-1a 64-bit hash.
std::uint64_t fnv1a(const std::string& text);

}  // namespace pfm
