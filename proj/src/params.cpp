#include "sadda/params.hpp"

#include <cstring>

namespace sadda {

template <typename T>
void ParameterSet<T>::insert(const std::string& name, Tensor<T> value) {
  if (name.empty()) throw ContractViolation("parameter name must not be empty");
  if (!items_.emplace(name, std::move(value)).second) {
    throw ContractViolation("duplicate parameter name '" + name + "'");
  }
}

template <typename T>
const Tensor<T>& ParameterSet<T>::at(const std::string& name) const {
  auto it = items_.find(name);
  if (it == items_.end()) throw ContractViolation("no parameter named '" + name + "'");
  return it->second;
}

template <typename T>
std::span<T> ParameterSet<T>::mutable_values(const std::string& name) {
  auto it = items_.find(name);
  if (it == items_.end()) throw ContractViolation("no parameter named '" + name + "'");
  return it->second.data();
}

template <typename T>
void ParameterSet<T>::assign(const std::string& name, const Tensor<T>& value) {
  auto it = items_.find(name);
  if (it == items_.end()) throw ContractViolation("no parameter named '" + name + "'");
  if (it->second.shape() != value.shape()) {
    shape_error("assign '" + name + "'", it->second.shape(), value.shape());
  }
  it->second = value;
}

template <typename T>
std::size_t ParameterSet<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& [_, v] : items_) n += v.numel();
  return n;
}

template <typename T>
std::vector<std::string> ParameterSet<T>::names() const {
  std::vector<std::string> out;
  out.reserve(items_.size());
  for (const auto& [name, _] : items_) out.push_back(name);
  return out;
}

template <typename T>
BoundParams<T> bind(Graph<T>& graph, const ParameterSet<T>& params, bool trainable) {
  BoundParams<T> out;
  for (const auto& [name, value] : params) {
    out.emplace(name, trainable ? graph.parameter(value) : graph.constant(value));
  }
  return out;
}

template <typename T>
NamedGradients<T> backward_named(Var<T> loss, const BoundParams<T>& wrt) {
  std::vector<Var<T>> vars;
  vars.reserve(wrt.size());
  for (const auto& [_, v] : wrt) vars.push_back(v);
  GradientMap<T> grads = loss.graph().backward(loss, vars);
  NamedGradients<T> out;
  for (const auto& [name, v] : wrt) out.emplace(name, std::move(grads.at(v.id())));
  return out;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t state) {
  for (std::uint8_t b : bytes) {
    state ^= b;
    state *= 0x100000001b3ULL;
  }
  return state;
}

std::uint64_t params_digest(const ParameterSet<float>& params) {
  std::uint64_t h = fnv1a({});
  auto feed = [&h](const void* p, std::size_t n) {
    h = fnv1a({static_cast<const std::uint8_t*>(p), n}, h);
  };
  for (const auto& [name, value] : params) {
    feed(name.data(), name.size());
    for (std::size_t d : value.shape().dims()) {
      const auto d32 = static_cast<std::uint32_t>(d);
      feed(&d32, sizeof d32);
    }
    feed(value.raw(), value.numel() * sizeof(float));
  }
  return h;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class ParameterSet<long double>;
template BoundParams<float> bind(Graph<float>&, const ParameterSet<float>&, bool);
template BoundParams<double> bind(Graph<double>&, const ParameterSet<double>&, bool);
template BoundParams<long double> bind(Graph<long double>&, const ParameterSet<long double>&, bool);
template NamedGradients<float> backward_named(Var<float>, const BoundParams<float>&);
template NamedGradients<double> backward_named(Var<double>, const BoundParams<double>&);

}  // namespace sadda
