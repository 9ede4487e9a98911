#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sadda/graph.hpp"
#include "sadda/params.hpp"

namespace sadda {

/// Probabilities are clamped to at least this value before any log.
inline constexpr double kProbabilityFloor = 1e-7;

/// batch x N indicator matrix with exactly one 1 per row.
class OneHotLabels {
 public:
  OneHotLabels(std::vector<int> classes, std::size_t num_classes);
  /// Validates a 0/1 matrix; throws ContractViolation on a row without
  /// exactly one 1.
  static OneHotLabels from_matrix(const Tensor<double>& matrix);

  std::size_t batch() const { return classes_.size(); }
  std::size_t num_classes() const { return num_classes_; }
  const std::vector<int>& classes() const { return classes_; }

  template <typename T>
  Tensor<T> matrix() const {
    Tensor<T> out(Shape{classes_.size(), num_classes_});
    for (std::size_t i = 0; i < classes_.size(); ++i) {
      out[i * num_classes_ + static_cast<std::size_t>(classes_[i])] = T{1};
    }
    return out;
  }

 private:
  std::vector<int> classes_;
  std::size_t num_classes_;
};

/// Mean over the batch of -sum_n y_n log p_n, probabilities clamped to
/// [1e-7, 1].
template <typename T>
Var<T> cross_entropy(Var<T> probs, const OneHotLabels& labels);

/// -mean log d_source - mean log(1 - d_target). Source is labelled 1, target 0.
template <typename T>
Var<T> disc_adversarial_loss(Var<T> d_source, Var<T> d_target);

/// -mean log d_target: the target encoder's loss with inverted labels.
template <typename T>
Var<T> encoder_adversarial_loss(Var<T> d_target);

struct AdamConfig {
  double learning_rate = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Tensor<T>> first_moment;
  std::map<std::string, Tensor<T>> second_moment;

  explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
};

/// One bias-corrected Adam update. `grads` must name exactly the parameters
/// in `params`. Each parameter is updated independently of the others.
template <typename T>
void adam_step(AdamState<T>& state, ParameterSet<T>& params,
               const NamedGradients<T>& grads);

}  // namespace sadda
