#pragma once

#include <functional>
#include <vector>

#include "maxim/tensor.hpp"

namespace maxim {

/// Reverse-mode tape. Nodes are appended in execution order, which is a
/// topological order by construction; backward walks them in exact reverse.
/// Recording and backward are single-threaded per graph.
class Graph {
 public:
  /// Given the gradient of the loss w.r.t. a node's output, returns the
  /// gradients w.r.t. each recorded parent (aligned with `parents`; an
  /// undefined Tensor means "no gradient flows to this parent").
  using Vjp = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

  /// Registers a leaf (input or parameter). The returned tensor shares
  /// storage with `t` and carries the new node id.
  Tensor watch(const Tensor& t);

  int add_node(std::vector<int> parents, Vjp vjp);

  /// Reverse accumulation from a scalar loss. Returns per-node gradients;
  /// entries for nodes the loss does not reach are left undefined.
  std::vector<Tensor> backward(const Tensor& loss) const;

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> parents;
    Vjp vjp;  // empty for leaves
  };
  std::vector<Node> nodes_;
};

}  // namespace maxim
