#include "sadda/graph.hpp"

namespace sadda {

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, false});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::parameter(Tensor<T> value) {
  nodes_.push_back(Node{"parameter", std::move(value), {}, {}, true});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::record(const char* op, Tensor<T> value,
                        std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) {
      throw ContractViolation(std::string(op) + ": input node " +
                              std::to_string(in) + " does not exist yet");
    }
    needs = needs || nodes_[in].requires_grad;
  }
  if (!needs) backward = nullptr;
  nodes_.push_back(
      Node{op, std::move(value), std::move(inputs), std::move(backward), needs});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
void Graph<T>::accumulate(std::size_t id, Tensor<T> grad) {
  if (!in_backward_) {
    throw ContractViolation("accumulate() called outside backward()");
  }
  Node& node = nodes_.at(id);
  if (!node.requires_grad) return;
  if (grad.shape() != node.value.shape()) {
    shape_error(std::string("gradient for ") + node.op, grad.shape(),
                node.value.shape());
  }
  auto& slot = pending_[id];
  if (!slot) {
    slot = std::move(grad);
    return;
  }
  auto dst = slot->data();
  auto src = grad.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
GradientMap<T> Graph<T>::backward(Var<T> loss, std::span<const Var<T>> wrt) {
  if (&loss.graph() != this) {
    throw ContractViolation("backward: loss belongs to a different graph");
  }
  if (loss.value().numel() != 1) {
    throw ContractViolation("backward: loss must be scalar, got shape " +
                            loss.shape().str());
  }
  pending_.assign(nodes_.size(), std::nullopt);
  in_backward_ = true;
  if (nodes_[loss.id()].requires_grad) {
    pending_[loss.id()] = Tensor<T>(loss.shape(), T{1});
  }
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!pending_[id] || !node.backward) continue;
    node.backward(*pending_[id], id, *this);
  }
  in_backward_ = false;

  GradientMap<T> out;
  for (const Var<T>& v : wrt) {
    auto& slot = pending_.at(v.id());
    out.insert_or_assign(v.id(), slot ? *slot : Tensor<T>(v.shape(), T{0}));
  }
  pending_.clear();
  return out;
}

template class Graph<float>;
template class Graph<double>;
template class Graph<long double>;

}  // namespace sadda
