#include "sadda/networks.hpp"

#include <cmath>
#include <random>

namespace sadda {

namespace {

std::string layer_name(const char* prefix, const char* layer, std::size_t index,
                       const char* field) {
  return std::string(prefix) + "." + layer + std::to_string(index) + "." + field;
}

template <typename T>
Tensor<T> he_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<T> out(std::move(shape));
  for (T& v : out.data()) v = static_cast<T>(dist(rng));
  return out;
}

template <typename T>
void add_dense(ParameterSet<T>& params, const std::string& stem, std::size_t in,
               std::size_t out, std::mt19937_64& rng) {
  params.insert(stem + ".weight", he_normal<T>(Shape{in, out}, in, rng));
  params.insert(stem + ".bias", Tensor<T>(Shape{out}));
}

template <typename T>
const Var<T>& require(const BoundParams<T>& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw ContractViolation("missing parameter '" + name + "'");
  return it->second;
}

template <typename T>
Var<T> dense(const BoundParams<T>& p, const std::string& stem, Var<T> x) {
  return add(matmul(x, require(p, stem + ".weight")), require(p, stem + ".bias"));
}

std::size_t classifier_input_size(const ArchitecturePreset& preset) {
  const Shape f = preset.feature_shape();
  if (preset.kind == ArchitectureKind::conv_image &&
      preset.handoff == FeatureHandoff::global_avg_pool) {
    return f[2];
  }
  return f.numel();
}

}  // namespace

ArchitecturePreset ArchitecturePreset::conv_image(Shape input_shape,
                                                  std::size_t num_classes) {
  ArchitecturePreset p;
  p.kind = ArchitectureKind::conv_image;
  p.input_shape = std::move(input_shape);
  p.num_classes = num_classes;
  return p;
}

ArchitecturePreset ArchitecturePreset::mlp_vector(std::size_t input_dim,
                                                  std::size_t num_classes) {
  ArchitecturePreset p;
  p.kind = ArchitectureKind::mlp_vector;
  p.input_shape = Shape{input_dim};
  p.num_classes = num_classes;
  p.encoder_widths = {64, 64};
  p.discriminator_widths = {64, 64};
  return p;
}

void ArchitecturePreset::validate() const {
  if (num_classes < 2) throw ContractViolation("preset: num_classes must be >= 2");
  if (encoder_widths.empty() || discriminator_widths.empty()) {
    throw ContractViolation("preset: encoder and discriminator need at least one layer");
  }
  for (std::size_t w : encoder_widths) {
    if (w == 0) throw ContractViolation("preset: zero encoder width");
  }
  for (std::size_t w : discriminator_widths) {
    if (w == 0) throw ContractViolation("preset: zero discriminator width");
  }
  if (classifier_hidden == 0) throw ContractViolation("preset: zero classifier width");
  if (!(leaky_alpha >= 0.0 && leaky_alpha < 1.0)) {
    throw ContractViolation("preset: leaky_alpha must lie in [0, 1)");
  }
  if (kind == ArchitectureKind::mlp_vector) {
    if (input_shape.rank() != 1) {
      throw ContractViolation("mlp_vector preset needs a rank-1 input shape, got " +
                              input_shape.str());
    }
    return;
  }
  if (input_shape.rank() != 3) {
    throw ContractViolation("conv_image preset needs an h x w x c input shape, got " +
                            input_shape.str());
  }
  if (kernel_size == 0 || stride < 2) {
    throw ContractViolation("conv_image preset needs kernel_size >= 1 and stride >= 2");
  }
  std::size_t factor = 1;
  for (std::size_t i = 0; i < encoder_widths.size(); ++i) factor *= stride;
  if (input_shape[0] % factor != 0 || input_shape[1] % factor != 0) {
    throw ContractViolation("conv_image preset: input " + input_shape.str() +
                            " not divisible by " + std::to_string(factor) +
                            " for a " + std::to_string(encoder_widths.size()) +
                            "-layer stride-" + std::to_string(stride) + " stack");
  }
}

Shape ArchitecturePreset::feature_shape() const {
  if (kind == ArchitectureKind::mlp_vector) return Shape{encoder_widths.back()};
  std::size_t factor = 1;
  for (std::size_t i = 0; i < encoder_widths.size(); ++i) factor *= stride;
  return Shape{input_shape[0] / factor, input_shape[1] / factor, encoder_widths.back()};
}

template <typename T>
ParameterSet<T> init_params(const ArchitecturePreset& preset, NetworkRole role,
                            std::uint64_t seed) {
  preset.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(role) + 1u};
  std::mt19937_64 rng(seq);
  ParameterSet<T> params;
  const std::size_t k = preset.kernel_size;
  const bool conv = preset.kind == ArchitectureKind::conv_image;

  switch (role) {
    case NetworkRole::encoder: {
      std::size_t in = conv ? preset.input_shape[2] : preset.input_shape[0];
      for (std::size_t i = 0; i < preset.encoder_widths.size(); ++i) {
        const std::size_t out = preset.encoder_widths[i];
        if (conv) {
          params.insert(layer_name("enc", "conv", i + 1, "kernel"),
                        he_normal<T>(Shape{k, k, in, out}, k * k * in, rng));
          params.insert(layer_name("enc", "conv", i + 1, "bias"), Tensor<T>(Shape{out}));
        } else {
          add_dense(params, "enc.dense" + std::to_string(i + 1), in, out, rng);
        }
        in = out;
      }
      break;
    }
    case NetworkRole::classifier: {
      add_dense(params, "cls.dense1", classifier_input_size(preset),
                preset.classifier_hidden, rng);
      add_dense(params, "cls.dense2", preset.classifier_hidden, preset.num_classes, rng);
      break;
    }
    case NetworkRole::discriminator: {
      std::size_t in = conv ? preset.feature_shape()[2] : preset.feature_shape()[0];
      for (std::size_t i = 0; i < preset.discriminator_widths.size(); ++i) {
        const std::size_t out = preset.discriminator_widths[i];
        if (conv) {
          // Transpose kernels are stored in the forward-conv layout k x k x out x in.
          params.insert(layer_name("disc", "tconv", i + 1, "kernel"),
                        he_normal<T>(Shape{k, k, out, in}, k * k * in, rng));
          params.insert(layer_name("disc", "tconv", i + 1, "bias"), Tensor<T>(Shape{out}));
        } else {
          add_dense(params, "disc.dense" + std::to_string(i + 1), in, out, rng);
        }
        in = out;
      }
      add_dense(params, "disc.head", in, preset.num_classes, rng);
      break;
    }
  }
  return params;
}

template <typename T>
Var<T> encoder_forward(const BoundParams<T>& encoder,
                       const ArchitecturePreset& preset, Var<T> batch) {
  const Shape& s = batch.shape();
  bool ok = s.rank() == preset.input_shape.rank() + 1;
  for (std::size_t i = 0; ok && i < preset.input_shape.rank(); ++i) {
    ok = s[i + 1] == preset.input_shape[i];
  }
  if (!ok) {
    throw ContractViolation("encoder_forward: batch shape " + s.str() +
                            " does not match preset input " + preset.input_shape.str());
  }
  Var<T> h = batch;
  for (std::size_t i = 0; i < preset.encoder_widths.size(); ++i) {
    if (preset.kind == ArchitectureKind::conv_image) {
      h = conv2d(h, require(encoder, layer_name("enc", "conv", i + 1, "kernel")),
                 preset.stride, Padding::same);
      h = add(h, require(encoder, layer_name("enc", "conv", i + 1, "bias")));
    } else {
      h = dense(encoder, "enc.dense" + std::to_string(i + 1), h);
    }
    h = relu(h);
  }
  return h;
}

template <typename T>
Var<T> classifier_logits(const BoundParams<T>& classifier,
                         const ArchitecturePreset& preset, Var<T> features) {
  Var<T> h = features;
  if (h.shape().rank() == 4) {
    h = preset.handoff == FeatureHandoff::global_avg_pool ? global_avg_pool(h)
                                                          : flatten(h);
  }
  if (h.shape().rank() != 2 || h.shape()[1] != classifier_input_size(preset)) {
    throw ContractViolation("classifier: features " + features.shape().str() +
                            " do not match preset feature shape " +
                            preset.feature_shape().str());
  }
  h = relu(dense(classifier, "cls.dense1", h));
  return dense(classifier, "cls.dense2", h);
}

template <typename T>
DiscriminatorLogits<T> discriminator_logits(const BoundParams<T>& discriminator,
                                            const ArchitecturePreset& preset,
                                            Var<T> features) {
  const Shape expected = preset.feature_shape();
  const Shape& s = features.shape();
  bool ok = s.rank() == expected.rank() + 1;
  for (std::size_t i = 0; ok && i < expected.rank(); ++i) ok = s[i + 1] == expected[i];
  if (!ok) {
    throw ContractViolation("discriminator: features " + s.str() +
                            " do not match encoder output " + expected.str());
  }
  const T alpha = static_cast<T>(preset.leaky_alpha);
  Var<T> h = features;
  for (std::size_t i = 0; i < preset.discriminator_widths.size(); ++i) {
    if (preset.kind == ArchitectureKind::conv_image) {
      h = conv2d_transpose(
          h, require(discriminator, layer_name("disc", "tconv", i + 1, "kernel")),
          preset.stride);
      h = add(h, require(discriminator, layer_name("disc", "tconv", i + 1, "bias")));
    } else {
      h = dense(discriminator, "disc.dense" + std::to_string(i + 1), h);
    }
    h = leaky_relu(h, alpha);
  }
  if (preset.kind == ArchitectureKind::conv_image) h = global_avg_pool(h);
  return {dense(discriminator, "disc.head", h)};
}

Tensor<float> encode(const ParameterSet<float>& encoder,
                     const ArchitecturePreset& preset, const Tensor<float>& batch) {
  Graph<float> g;
  const auto enc = bind(g, encoder, false);
  return encoder_forward(enc, preset, g.constant(batch)).value();
}

Tensor<float> predict_probabilities(const ParameterSet<float>& encoder,
                                    const ParameterSet<float>& classifier,
                                    const ArchitecturePreset& preset,
                                    const Tensor<float>& batch) {
  Graph<float> g;
  const auto enc = bind(g, encoder, false);
  const auto cls = bind(g, classifier, false);
  return classifier_forward(cls, preset, encoder_forward(enc, preset, g.constant(batch)))
      .value();
}

#define SADDA_INSTANTIATE_NETWORKS(T)                                          \
  template ParameterSet<T> init_params<T>(const ArchitecturePreset&,           \
                                          NetworkRole, std::uint64_t);         \
  template Var<T> encoder_forward(const BoundParams<T>&,                       \
                                  const ArchitecturePreset&, Var<T>);          \
  template Var<T> classifier_logits(const BoundParams<T>&,                     \
                                    const ArchitecturePreset&, Var<T>);        \
  template DiscriminatorLogits<T> discriminator_logits(                        \
      const BoundParams<T>&, const ArchitecturePreset&, Var<T>);

SADDA_INSTANTIATE_NETWORKS(float)
SADDA_INSTANTIATE_NETWORKS(double)
SADDA_INSTANTIATE_NETWORKS(long double)

#undef SADDA_INSTANTIATE_NETWORKS

}  // namespace sadda
