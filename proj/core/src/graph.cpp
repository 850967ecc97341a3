#include "maxim/graph.hpp"

#include "maxim/ops.hpp"

namespace maxim {

Tensor Graph::watch(const Tensor& t) {
  int id = add_node({}, nullptr);
  return t.attached_to(this, id);
}

int Graph::add_node(std::vector<int> parents, Vjp vjp) {
  nodes_.push_back(Node{std::move(parents), std::move(vjp)});
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<Tensor> Graph::backward(const Tensor& loss) const {
  if (!loss.attached() || loss.graph() != this)
    throw Error("backward: loss is not recorded on this graph");
  if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar");

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.node()] = Tensor::full(loss.shape(), 1.0, loss.dtype());

  for (int i = loss.node(); i >= 0; --i) {
    if (!grads[i].defined()) continue;
    const Node& n = nodes_[i];
    if (!n.vjp) continue;  // leaf
    std::vector<Tensor> parent_grads = n.vjp(grads[i]);
    if (parent_grads.size() != n.parents.size())
      throw Error("backward: vjp arity mismatch");
    for (size_t k = 0; k < n.parents.size(); ++k) {
      int p = n.parents[k];
      if (p < 0 || !parent_grads[k].defined()) continue;
      if (grads[p].defined())
        grads[p] = add(grads[p], parent_grads[k]);
      else
        grads[p] = std::move(parent_grads[k]);
    }
    if (i != loss.node()) grads[i] = Tensor();  // release intermediates early
  }
  return grads;
}

}  // namespace maxim
