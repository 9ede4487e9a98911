#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sadda/graph.hpp"
#include "sadda/tensor.hpp"

namespace sadda {

/// Named trainable tensors of one network, iterated in sorted name order.
/// Shapes are fixed once inserted; values may be updated in place.
template <typename T>
class ParameterSet {
 public:
  using Map = std::map<std::string, Tensor<T>>;

  void insert(const std::string& name, Tensor<T> value);

  bool contains(const std::string& name) const { return items_.count(name) != 0; }
  const Tensor<T>& at(const std::string& name) const;
  std::span<T> mutable_values(const std::string& name);
  /// Overwrites the values of an existing entry; shapes must match.
  void assign(const std::string& name, const Tensor<T>& value);

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::size_t total_elements() const;
  std::vector<std::string> names() const;

  typename Map::const_iterator begin() const { return items_.begin(); }
  typename Map::const_iterator end() const { return items_.end(); }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [name, value] : items_) out.insert(name, value.template cast<U>());
    return out;
  }

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  Map items_;
};

/// Deep copy (ParameterSet is a value type; this names the intent).
template <typename T>
ParameterSet<T> clone_params(const ParameterSet<T>& src) {
  return src;
}

/// Parameters placed into a graph, keyed by the same names.
template <typename T>
using BoundParams = std::map<std::string, Var<T>>;

/// Puts every parameter into `graph`, as a differentiable leaf when
/// `trainable`, otherwise as a constant.
template <typename T>
BoundParams<T> bind(Graph<T>& graph, const ParameterSet<T>& params, bool trainable);

template <typename T>
using NamedGradients = std::map<std::string, Tensor<T>>;

/// Gradients for every bound parameter, re-keyed by name.
template <typename T>
NamedGradients<T> backward_named(Var<T> loss, const BoundParams<T>& wrt);

/// 64-bit FNV-1a over names, shapes and raw value bytes.
std::uint64_t params_digest(const ParameterSet<float>& params);

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes,
                    std::uint64_t state = 0xcbf29ce484222325ULL);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class ParameterSet<long double>;

}  // namespace sadda
