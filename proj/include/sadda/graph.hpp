#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sadda/tensor.hpp"

namespace sadda {

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
class Var {
 public:
  using value_type = T;

  Var() = default;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  const Tensor<T>& value() const { return graph_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Graph<T>& graph() const { return *graph_; }
  bool requires_grad() const { return graph_->requires_grad(id_); }

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// d(loss)/d(node) for each requested node id.
template <typename T>
using GradientMap = std::map<std::size_t, Tensor<T>>;

/// Append-only record of a forward computation. Nodes reference only earlier
/// nodes, so a single reverse sweep over node ids is a valid topological
/// order for the backward pass.
template <typename T>
class Graph {
 public:
  using value_type = T;

  /// Called once during backward with the accumulated output gradient and
  /// the node's own id. Implementations push input gradients through
  /// accumulate().
  using BackwardFn =
      std::function<void(const Tensor<T>& grad_out, std::size_t self, Graph& g)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> parameter(Tensor<T> value);

  /// Records an operation. The node requires grad iff any input does; the
  /// backward closure is dropped otherwise.
  Var<T> record(const char* op, Tensor<T> value, std::vector<std::size_t> inputs,
                BackwardFn backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const char* op(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const {
    return nodes_.at(id).inputs;
  }
  std::size_t size() const { return nodes_.size(); }

  /// Adds `grad` into the pending gradient of node `id`. No-op for nodes that
  /// do not require grad. Only meaningful inside a BackwardFn.
  void accumulate(std::size_t id, Tensor<T> grad);

  /// Reverse-mode sweep from a scalar loss. Every node in `wrt` appears in the
  /// result; nodes the loss does not depend on get a zero tensor.
  GradientMap<T> backward(Var<T> loss, std::span<const Var<T>> wrt);

 private:
  struct Node {
    const char* op;
    Tensor<T> value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad;
  };

  std::deque<Node> nodes_;  // push_back keeps references to values valid
  std::vector<std::optional<Tensor<T>>> pending_;
  bool in_backward_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;
extern template class Graph<long double>;

}  // namespace sadda
