#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "sadda/networks.hpp"

using namespace sadda;

namespace {

Tensor<float> random_batch(Shape s, std::uint64_t seed, float lo = 0.f, float hi = 1.f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(lo, hi);
  Tensor<float> t(std::move(s));
  for (float& v : t.data()) v = d(rng);
  return t;
}

// Straight-line reimplementation of the conv encoder (explicit loops, no
// im2col) used as the golden-value oracle.
std::vector<double> reference_encoder(const ParameterSet<float>& p,
                                      const ArchitecturePreset& preset,
                                      const Tensor<float>& x) {
  std::size_t h = x.dim(1), w = x.dim(2), c = x.dim(3);
  std::vector<double> act(x.values().begin(), x.values().end());
  for (std::size_t layer = 1; layer <= preset.encoder_widths.size(); ++layer) {
    const auto& k = p.at("enc.conv" + std::to_string(layer) + ".kernel");
    const auto& b = p.at("enc.conv" + std::to_string(layer) + ".bias");
    const std::size_t co = k.dim(3), oh = h / 2, ow = w / 2;
    // k=4, s=2, same: total pad 2, one cell before.
    std::vector<double> next(oh * ow * co, 0.0);
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        for (std::size_t o = 0; o < co; ++o) {
          double acc = b[o];
          for (std::size_t ky = 0; ky < 4; ++ky)
            for (std::size_t kx = 0; kx < 4; ++kx) {
              const long iy = long(2 * oy + ky) - 1, ix = long(2 * ox + kx) - 1;
              if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(w)) continue;
              for (std::size_t ci = 0; ci < c; ++ci)
                acc += act[(iy * w + ix) * c + ci] * k[((ky * 4 + kx) * c + ci) * co + o];
            }
          next[(oy * ow + ox) * co + o] = std::max(acc, 0.0);
        }
    act = std::move(next);
    h = oh;
    w = ow;
    c = co;
  }
  return act;
}

std::vector<Shape> op_output_shapes(const Graph<float>& g, const char* op) {
  std::vector<Shape> out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (std::strcmp(g.op(i), op) == 0) out.push_back(g.value(i).shape());
  }
  return out;
}

double unsup(std::vector<double> logits) {
  Graph<double> g;
  const Shape shape{1, logits.size()};
  auto l = g.constant(Tensor<double>(shape, std::move(logits)));
  return discriminator_unsupervised(DiscriminatorLogits<double>{l}).value()[0];
}

}  // namespace

TEST_CASE("preset validation") {
  auto p = ArchitecturePreset::conv_image(Shape{16, 16, 1}, 10);
  CHECK_NOTHROW(p.validate());
  CHECK(p.feature_shape() == Shape{1, 1, 256});
  auto bad = p;
  bad.num_classes = 1;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  bad = p;
  bad.input_shape = Shape{12, 12, 1};
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
  CHECK_THROWS_AS(init_params<float>(bad, NetworkRole::encoder, 1), ContractViolation);
  auto mlp = ArchitecturePreset::mlp_vector(2, 2);
  CHECK_NOTHROW(mlp.validate());
  CHECK(mlp.feature_shape() == Shape{64});
}

TEST_CASE("init_params is deterministic with zero biases and He variance") {
  const auto preset = ArchitecturePreset::conv_image(Shape{16, 16, 1}, 10);
  for (NetworkRole role : {NetworkRole::encoder, NetworkRole::classifier,
                           NetworkRole::discriminator}) {
    const auto a = init_params<float>(preset, role, 42);
    const auto b = init_params<float>(preset, role, 42);
    CHECK(a == b);
    CHECK_FALSE(a == init_params<float>(preset, role, 43));
    for (const auto& [name, t] : a) {
      if (!name.ends_with(".bias")) continue;
      for (float v : t.data()) CHECK(v == 0.0f);
    }
  }
  const auto enc = init_params<float>(preset, NetworkRole::encoder, 7);
  const auto& k = enc.at("enc.conv2.kernel");
  REQUIRE(k.shape() == Shape{4, 4, 32, 64});
  double mean = 0, sq = 0;
  for (float v : k.data()) mean += v;
  mean /= double(k.numel());
  for (float v : k.data()) sq += (v - mean) * (v - mean);
  const double var = sq / double(k.numel() - 1);
  const double expected = 2.0 / (4 * 4 * 32);
  CHECK(std::abs(var - expected) < 0.2 * expected);
}

TEST_CASE("architecture is structurally as described") {
  const auto preset = ArchitecturePreset::conv_image(Shape{16, 16, 1}, 10);
  std::vector<std::size_t> reversed(preset.encoder_widths.rbegin(), preset.encoder_widths.rend());
  CHECK(preset.discriminator_widths == reversed);
  CHECK(preset.encoder_widths == std::vector<std::size_t>{32, 64, 128, 256});
  // Only the final prediction layer of the discriminator is fully connected.
  for (const auto& name : init_params<float>(preset, NetworkRole::encoder, 1).names()) {
    CHECK(name.find("dense") == std::string::npos);
  }
  for (const auto& name : init_params<float>(preset, NetworkRole::discriminator, 1).names()) {
    CHECK((name.find("tconv") != std::string::npos || name.starts_with("disc.head.")));
  }
}

TEST_CASE("encoder halves spatial size per layer and discriminator doubles it") {
  const auto preset = ArchitecturePreset::conv_image(Shape{16, 16, 1}, 10);
  const auto enc_p = init_params<float>(preset, NetworkRole::encoder, 3);
  const auto disc_p = init_params<float>(preset, NetworkRole::discriminator, 4);
  Graph<float> g;
  const auto enc = bind(g, enc_p, false);
  const auto disc = bind(g, disc_p, false);
  auto feats = encoder_forward(enc, preset, g.constant(random_batch(Shape{2, 16, 16, 1}, 1)));
  CHECK(feats.shape() == Shape{2, 1, 1, 256});
  auto logits = discriminator_logits(disc, preset, feats);
  CHECK(logits.logits.shape() == Shape{2, 10});

  const auto convs = op_output_shapes(g, "conv2d");
  REQUIRE(convs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(convs[i][1] == (16u >> (i + 1)));
  const auto tconvs = op_output_shapes(g, "conv2d_transpose");
  REQUIRE(tconvs.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(tconvs[i][1] == (2u << i));
    CHECK(tconvs[i][3] == preset.discriminator_widths[i]);
  }
}

TEST_CASE("encoder: zero input gives zero features; golden values") {
  auto preset = ArchitecturePreset::conv_image(Shape{16, 16, 1}, 10);
  const auto enc = init_params<float>(preset, NetworkRole::encoder, 11);
  const auto zero = encode(enc, preset, Tensor<float>(Shape{1, 16, 16, 1}));
  for (float v : zero.data()) CHECK(v == 0.0f);

  const auto x = random_batch(Shape{1, 16, 16, 1}, 99);
  const auto fast = encode(enc, preset, x);
  const auto golden = reference_encoder(enc, preset, x);
  REQUIRE(fast.numel() == golden.size());
  for (std::size_t i = 0; i < golden.size(); ++i) {
    CHECK(fast[i] == doctest::Approx(golden[i]).epsilon(1e-4).scale(1e-3));
  }
  CHECK_THROWS_AS(encode(enc, preset, Tensor<float>(Shape{1, 8, 8, 1})), ContractViolation);
}

TEST_CASE("classifier outputs probabilities") {
  const auto preset = ArchitecturePreset::conv_image(Shape{16, 16, 1}, 10);
  double max_prob_sum = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto enc = init_params<float>(preset, NetworkRole::encoder, seed);
    const auto cls = init_params<float>(preset, NetworkRole::classifier, seed);
    const auto probs =
        predict_probabilities(enc, cls, preset, random_batch(Shape{4, 16, 16, 1}, seed + 100));
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0, m = 0;
      for (std::size_t c = 0; c < 10; ++c) {
        s += probs[r * 10 + c];
        m = std::max(m, double(probs[r * 10 + c]));
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
      max_prob_sum += m;
    }
  }
  CHECK(max_prob_sum / 40 < 0.9);

  Graph<float> g;
  const auto cls = bind(g, init_params<float>(preset, NetworkRole::classifier, 5), false);
  CHECK_THROWS_AS(classifier_forward(cls, preset, g.constant(Tensor<float>(Shape{2, 7}))),
                  ContractViolation);
}

TEST_CASE("argmax is invariant to a constant shift of the logits row") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(-5, 5);
  for (int t = 0; t < 50; ++t) {
    Tensor<double> logits(Shape{1, 6});
    for (double& v : logits.data()) v = d(rng);
    Tensor<double> shifted = logits;
    const double shift = d(rng) * 10;
    for (double& v : shifted.data()) v += shift;
    const auto a = kernels::softmax(logits, 1);
    const auto b = kernels::softmax(shifted, 1);
    CHECK(std::max_element(a.data().begin(), a.data().end()) - a.data().begin() ==
          std::max_element(b.data().begin(), b.data().end()) - b.data().begin());
  }
}

TEST_CASE("discriminator logits shape and overflow stress") {
  const auto preset = ArchitecturePreset::conv_image(Shape{16, 16, 1}, 10);
  const auto disc_p = init_params<float>(preset, NetworkRole::discriminator, 21);
  for (std::size_t batch : {1u, 3u, 7u}) {
    Graph<float> g;
    const auto disc = bind(g, disc_p, false);
    auto feats = g.constant(random_batch(Shape{batch, 1, 1, 256}, batch, -1e3f, 1e3f));
    auto logits = discriminator_logits(disc, preset, feats);
    CHECK(logits.logits.shape() == Shape{batch, 10});
    CHECK(logits.logits.value().all_finite());
    const auto d = discriminator_unsupervised(logits).value();
    CHECK(d.shape() == Shape{batch, 1});
    CHECK(d.all_finite());
  }
  Graph<float> g;
  const auto disc = bind(g, disc_p, false);
  CHECK_THROWS_AS(discriminator_logits(disc, preset, g.constant(Tensor<float>(Shape{1, 2, 2, 256}))),
                  ContractViolation);
}

TEST_CASE("unsupervised head reproduces the custom-activation table") {
  CHECK(std::abs(unsup({9, 1, 1}) - 0.9999) <= 1e-4);
  CHECK(std::abs(unsup({5, 1, 1}) - 0.9935) <= 1e-4);
  CHECK(std::abs(unsup({-5, -5, -5}) - 0.0198) <= 1e-4);
  CHECK(unsup({0}) == doctest::Approx(0.5));
}

TEST_CASE("head sharing: sigmoid(logsumexp) equals Z/(Z+1)") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> d(-20, 20);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> l(1 + t % 6);
    for (double& v : l) v = d(rng);
    double z = 0;
    for (double v : l) z += std::exp(v);
    const double direct = z / (z + 1);
    CHECK(std::abs(unsup(l) - direct) <= 1e-12);
  }
  // Strictly increasing in every logit (range kept where a 0.1 bump is
  // resolvable in double precision).
  std::uniform_real_distribution<double> moderate(-5, 5);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> l(1 + t % 6);
    for (double& v : l) v = moderate(rng);
    const double before = unsup(l);
    for (std::size_t i = 0; i < l.size(); ++i) {
      auto bumped = l;
      bumped[i] += 0.1;
      CHECK(unsup(bumped) > before);
    }
  }
  std::uniform_real_distribution<double> wide(-30, 30);
  for (int t = 0; t < 200; ++t) {
    const double v = unsup({wide(rng), wide(rng), wide(rng)});
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("supervised head is the softmax of the shared logits") {
  Graph<double> g;
  auto eq = g.constant(Tensor<double>(Shape{2, 4}, 3.0));
  for (double v : discriminator_supervised(DiscriminatorLogits<double>{eq}).value().data()) {
    CHECK(v == doctest::Approx(0.25));
  }
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> d(-8, 8);
  Tensor<double> t(Shape{3, 5});
  for (double& v : t.data()) v = d(rng);
  auto l = g.constant(t);
  CHECK(discriminator_supervised(DiscriminatorLogits<double>{l}).value() == softmax(l, 1).value());
}

TEST_CASE("clone_params is a deep copy") {
  const auto preset = ArchitecturePreset::conv_image(Shape{16, 16, 1}, 10);
  const auto source = init_params<float>(preset, NetworkRole::encoder, 12);
  auto target = clone_params(source);
  CHECK(target == source);
  const auto x = random_batch(Shape{2, 16, 16, 1}, 5);
  CHECK(encode(target, preset, x) == encode(source, preset, x));
  target.mutable_values("enc.conv1.kernel")[0] += 1.0f;
  CHECK_FALSE(target == source);
  CHECK(source == init_params<float>(preset, NetworkRole::encoder, 12));
}

TEST_CASE("mlp preset end to end shapes") {
  const auto preset = ArchitecturePreset::mlp_vector(2, 2);
  const auto enc = init_params<float>(preset, NetworkRole::encoder, 1);
  const auto cls = init_params<float>(preset, NetworkRole::classifier, 1);
  const auto x = random_batch(Shape{5, 2}, 3, -1, 1);
  CHECK(encode(enc, preset, x).shape() == Shape{5, 64});
  CHECK(predict_probabilities(enc, cls, preset, x).shape() == Shape{5, 2});
  Graph<float> g;
  const auto disc = bind(g, init_params<float>(preset, NetworkRole::discriminator, 1), false);
  auto feats = g.constant(encode(enc, preset, x));
  CHECK(discriminator_logits(disc, preset, feats).logits.shape() == Shape{5, 2});
}
