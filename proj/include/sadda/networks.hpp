#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sadda/graph.hpp"
#include "sadda/ops.hpp"
#include "sadda/params.hpp"

namespace sadda {

enum class ArchitectureKind { conv_image, mlp_vector };

/// How rank-4 encoder features reach the classifier's dense layers.
enum class FeatureHandoff { flatten, global_avg_pool };

struct ArchitecturePreset {
  ArchitectureKind kind = ArchitectureKind::conv_image;
  /// Per-sample input shape: h x w x c for images, {d} for vectors.
  Shape input_shape{16, 16, 1};
  std::size_t num_classes = 10;
  /// Conv: output channels of each stride-2 conv. MLP: units per dense layer.
  std::vector<std::size_t> encoder_widths{32, 64, 128, 256};
  /// Conv: channels of each stride-2 transpose conv. MLP: dense trunk units.
  std::vector<std::size_t> discriminator_widths{256, 128, 64, 32};
  std::size_t classifier_hidden = 100;
  std::size_t kernel_size = 4;
  std::size_t stride = 2;
  double leaky_alpha = 0.2;
  FeatureHandoff handoff = FeatureHandoff::flatten;

  static ArchitecturePreset conv_image(Shape input_shape, std::size_t num_classes);
  static ArchitecturePreset mlp_vector(std::size_t input_dim, std::size_t num_classes);

  /// Throws ContractViolation on a malformed preset.
  void validate() const;

  /// Per-sample encoder output shape (h x w x c for conv, {units} for mlp).
  Shape feature_shape() const;
  std::size_t feature_size() const { return feature_shape().numel(); }
};

/// Pre-softmax outputs l_1..l_N shared by both discriminator heads.
template <typename T>
struct DiscriminatorLogits {
  Var<T> logits;
};

enum class NetworkRole { encoder, classifier, discriminator };

/// He-scaled normal weights (std = sqrt(2 / fan_in)), zero biases.
template <typename T>
ParameterSet<T> init_params(const ArchitecturePreset& preset, NetworkRole role,
                            std::uint64_t seed);

template <typename T>
Var<T> encoder_forward(const BoundParams<T>& encoder,
                       const ArchitecturePreset& preset, Var<T> batch);

template <typename T>
Var<T> classifier_logits(const BoundParams<T>& classifier,
                         const ArchitecturePreset& preset, Var<T> features);

/// Class probabilities, batch x N.
template <typename T>
Var<T> classifier_forward(const BoundParams<T>& classifier,
                          const ArchitecturePreset& preset, Var<T> features) {
  return softmax(classifier_logits(classifier, preset, features), 1);
}

template <typename T>
DiscriminatorLogits<T> discriminator_logits(const BoundParams<T>& discriminator,
                                            const ArchitecturePreset& preset,
                                            Var<T> features);

/// Supervised head: softmax over the N task classes.
template <typename T>
Var<T> discriminator_supervised(const DiscriminatorLogits<T>& logits) {
  return softmax(logits.logits, 1);
}

/// Unsupervised head Z/(Z+1) with Z = sum_n exp(l_n), evaluated as
/// sigmoid(logsumexp(l)). Returns batch x 1 values in (0, 1).
template <typename T>
Var<T> discriminator_unsupervised(const DiscriminatorLogits<T>& logits) {
  return sigmoid(logsumexp(logits.logits, 1));
}

/// Graph-free inference: class probabilities of classifier(encoder(batch)).
Tensor<float> predict_probabilities(const ParameterSet<float>& encoder,
                                    const ParameterSet<float>& classifier,
                                    const ArchitecturePreset& preset,
                                    const Tensor<float>& batch);

/// Graph-free encoder features.
Tensor<float> encode(const ParameterSet<float>& encoder,
                     const ArchitecturePreset& preset, const Tensor<float>& batch);

}  // namespace sadda
