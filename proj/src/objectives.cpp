#include "sadda/objectives.hpp"

#include <cmath>
#include <string>

#include "sadda/ops.hpp"

namespace sadda {

namespace {

template <typename T>
void check_probabilities(const char* what, const Var<T>& d) {
  for (T v : d.value().data()) {
    if (!(v >= T{0} && v <= T{1})) {
      throw NumericFault(std::string(what) + ": probability " + std::to_string(v) +
                         " outside [0, 1]");
    }
  }
}

template <typename T>
Var<T> clamp_open(Var<T> d) {
  const T floor = static_cast<T>(kProbabilityFloor);
  return clamp(d, floor, T{1} - floor);
}

}  // namespace

OneHotLabels::OneHotLabels(std::vector<int> classes, std::size_t num_classes)
    : classes_(std::move(classes)), num_classes_(num_classes) {
  if (num_classes_ == 0) throw ContractViolation("labels: num_classes must be positive");
  for (int c : classes_) {
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes_) {
      throw ContractViolation("labels: class " + std::to_string(c) + " outside [0, " +
                              std::to_string(num_classes_) + ")");
    }
  }
}

OneHotLabels OneHotLabels::from_matrix(const Tensor<double>& matrix) {
  if (matrix.rank() != 2) {
    throw ContractViolation("one-hot labels must be a batch x N matrix, got " +
                            matrix.shape().str());
  }
  const std::size_t rows = matrix.dim(0), cols = matrix.dim(1);
  std::vector<int> classes(rows, -1);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t ones = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = matrix[r * cols + c];
      if (v == 1.0) {
        ++ones;
        classes[r] = static_cast<int>(c);
      } else if (v != 0.0) {
        throw ContractViolation("one-hot row " + std::to_string(r) +
                                " has a value other than 0 or 1");
      }
    }
    if (ones != 1) {
      throw ContractViolation("one-hot row " + std::to_string(r) + " has " +
                              std::to_string(ones) + " ones, expected exactly 1");
    }
  }
  return OneHotLabels(std::move(classes), cols);
}

template <typename T>
Var<T> cross_entropy(Var<T> probs, const OneHotLabels& labels) {
  const Shape& s = probs.shape();
  if (s.rank() != 2 || s[0] != labels.batch() || s[1] != labels.num_classes()) {
    shape_error("cross_entropy", s, Shape{labels.batch(), labels.num_classes()});
  }
  check_probabilities("cross_entropy", probs);
  Graph<T>& g = probs.graph();
  Var<T> logp = log(clamp(probs, static_cast<T>(kProbabilityFloor), T{1}));
  Var<T> picked = mul(logp, g.constant(labels.matrix<T>()));
  return affine(sum(picked), T{-1} / static_cast<T>(labels.batch()), T{0});
}

template <typename T>
Var<T> disc_adversarial_loss(Var<T> d_source, Var<T> d_target) {
  check_probabilities("disc_adversarial_loss", d_source);
  check_probabilities("disc_adversarial_loss", d_target);
  Var<T> real = mean(log(clamp_open(d_source)));
  Var<T> fake = mean(log(affine(clamp_open(d_target), T{-1}, T{1})));
  return affine(add(real, fake), T{-1}, T{0});
}

template <typename T>
Var<T> encoder_adversarial_loss(Var<T> d_target) {
  check_probabilities("encoder_adversarial_loss", d_target);
  return affine(mean(log(clamp_open(d_target))), T{-1}, T{0});
}

template <typename T>
void adam_step(AdamState<T>& state, ParameterSet<T>& params,
               const NamedGradients<T>& grads) {
  for (const auto& [name, _] : grads) {
    if (!params.contains(name)) {
      throw ContractViolation("adam_step: gradient for unknown parameter '" + name + "'");
    }
  }
  for (const auto& [name, value] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) {
      throw ContractViolation("adam_step: missing gradient for '" + name + "'");
    }
    if (it->second.shape() != value.shape()) {
      shape_error("adam_step gradient '" + name + "'", it->second.shape(), value.shape());
    }
  }

  const AdamConfig& cfg = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  const T lr = static_cast<T>(cfg.learning_rate);
  const T eps = static_cast<T>(cfg.epsilon);

  for (const std::string& name : params.names()) {
    const Tensor<T>& g = grads.at(name);
    auto [m_it, m_new] = state.first_moment.try_emplace(name, g.shape());
    auto [v_it, v_new] = state.second_moment.try_emplace(name, g.shape());
    auto m = m_it->second.data();
    auto v = v_it->second.data();
    auto p = params.mutable_values(name);
    const auto gv = g.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * gv[i];
      v[i] = b2 * v[i] + (T{1} - b2) * gv[i] * gv[i];
      const T m_hat = m[i] / correction1;
      const T v_hat = v[i] / correction2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

#define SADDA_INSTANTIATE_OBJECTIVES(T)                                       \
  template Var<T> cross_entropy(Var<T>, const OneHotLabels&);                 \
  template Var<T> disc_adversarial_loss(Var<T>, Var<T>);                      \
  template Var<T> encoder_adversarial_loss(Var<T>);                           \
  template void adam_step(AdamState<T>&, ParameterSet<T>&,                    \
                          const NamedGradients<T>&);

SADDA_INSTANTIATE_OBJECTIVES(float)
SADDA_INSTANTIATE_OBJECTIVES(double)
SADDA_INSTANTIATE_OBJECTIVES(long double)

#undef SADDA_INSTANTIATE_OBJECTIVES

}  // namespace sadda
