#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "pfm/layers.hpp"
#include "pfm/params.hpp"
#include "pfm/tensor.hpp"

namespace pfm {

// Handle to a value recorded in a Graph.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

// Define-by-run tape. Every forward call records a node holding the output and
// whatever backward needs; backward() walks the tape in reverse and
// accumulates parameter gradients (+=) into the ParamSet, so a layer applied
// several times receives the sum of its contributions.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var input(Tensor value, bool requires_grad = false);

  // Generic entry point. `params` is required for parametric kinds. Loss
  // kinds take their targets through the dedicated helpers below.
  Var forward(const LayerSpec& spec, ParamSet* params, std::span<const Var> inputs);
  Var forward(const LayerSpec& spec, ParamSet& params, Var x);
  Var forward(const LayerSpec& spec, Var x);

  Var concat(std::span<const Var> inputs);
  // Mean over the batch of -log softmax(logits)[label].
  Var softmax_cross_entropy(Var logits, std::span<const int> labels);
  // 0.5 * sum(w * (pred - target)^2) / batch; empty weights mean all ones.
  Var euclidean_loss(Var pred, const Tensor& target, const Tensor& weights = Tensor());

  void backward(Var loss);
  // Backward from a non-scalar output seeded with the given upstream gradient.
  void backward(Var output, std::span<const float> seed);

  const Tensor& value(Var v) const;
  // Empty when no gradient reached the value.
  std::span<const float> grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    LayerSpec spec;
    bool is_input = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    LayerParams* params = nullptr;
    Tensor value;
    std::vector<float> grad;
    std::vector<float> cache;  // im2col columns or softmax probabilities
    std::vector<int> indices;  // pool argmax or class labels
    Tensor target;
    Tensor weights;
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Var push(Node n);
  void check_input(const Node& n, const LayerSpec& spec) const;
  void backward_node(Node& n);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace pfm
