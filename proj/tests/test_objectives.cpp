#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "sadda/gradcheck.hpp"
#include "sadda/objectives.hpp"
#include "sadda/ops.hpp"

using namespace sadda;

namespace {

Var<double> column(Graph<double>& g, std::vector<double> v, bool trainable = false) {
  const Shape s{v.size(), 1};
  Tensor<double> t(s, std::move(v));
  return trainable ? g.parameter(std::move(t)) : g.constant(std::move(t));
}

double loss_value(std::vector<double> ds, std::vector<double> dt) {
  Graph<double> g;
  return disc_adversarial_loss(column(g, std::move(ds)), column(g, std::move(dt))).value().item();
}

}  // namespace

TEST_CASE("cross_entropy values") {
  Graph<double> g;
  auto perfect = g.constant(Tensor<double>(Shape{2, 3}, {0, 1, 0, 1, 0, 0}));
  CHECK(cross_entropy(perfect, OneHotLabels({1, 0}, 3)).value().item() <= 1e-6);
  for (std::size_t n : {2u, 3u, 10u}) {
    auto uniform = g.constant(Tensor<double>(Shape{4, n}, 1.0 / double(n)));
    const double ce = cross_entropy(uniform, OneHotLabels({0, 1, 0, 1}, n)).value().item();
    CHECK(std::abs(ce - std::log(double(n))) < 1e-9);
  }
  CHECK_THROWS_AS(cross_entropy(perfect, OneHotLabels({1, 0, 2}, 3)), ContractViolation);
}

TEST_CASE("one-hot rows must contain exactly one 1") {
  CHECK(OneHotLabels::from_matrix(Tensor<double>(Shape{2, 2}, {0, 1, 1, 0})).classes() ==
        std::vector<int>{1, 0});
  CHECK_THROWS_AS(OneHotLabels::from_matrix(Tensor<double>(Shape{2, 2}, {0, 1, 0, 0})),
                  ContractViolation);
  CHECK_THROWS_AS(OneHotLabels::from_matrix(Tensor<double>(Shape{1, 2}, {1, 1})),
                  ContractViolation);
  CHECK_THROWS_AS(OneHotLabels({3}, 3), ContractViolation);
}

TEST_CASE("cross_entropy gradient w.r.t. logits is (softmax - onehot) / batch") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-3, 3);
  Tensor<double> logits(Shape{4, 5});
  for (double& v : logits.data()) v = d(rng);
  const OneHotLabels labels({0, 4, 2, 2}, 5);
  Graph<double> g;
  auto l = g.parameter(logits);
  const std::vector<Var<double>> wrt{l};
  const auto grads = backward(cross_entropy(softmax(l, 1), labels), wrt);
  const auto& grad = grads.at(l.id());
  const auto sm = kernels::softmax(logits, 1);
  const auto onehot = labels.matrix<double>();
  for (std::size_t i = 0; i < grad.numel(); ++i) {
    CHECK(grad[i] == doctest::Approx((sm[i] - onehot[i]) / 4.0).epsilon(1e-12));
  }
  const double err = grad_check(
      [&labels](auto v) { return cross_entropy(softmax(v, 1), labels); }, logits);
  CHECK(err < 1e-6);
}

TEST_CASE("disc_adversarial_loss values, limits and symmetry") {
  CHECK(std::abs(loss_value({0.5}, {0.5}) - 2 * std::numbers::ln2) < 1e-9);
  CHECK(loss_value({1.0, 1.0}, {0.0, 0.0}) < 1e-6);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(3), b(3), na(3), nb(3);
    for (int i = 0; i < 3; ++i) {
      a[i] = u(rng);
      b[i] = u(rng);
      na[i] = 1 - b[i];
      nb[i] = 1 - a[i];
    }
    CHECK(std::abs(loss_value(a, b) - loss_value(na, nb)) < 1e-12);
    CHECK(loss_value(a, b) >= 0.0);
  }
  Graph<double> g;
  CHECK_THROWS_AS(disc_adversarial_loss(column(g, {1.5}), column(g, {0.5})), NumericFault);
  CHECK_THROWS_AS(disc_adversarial_loss(column(g, {0.5}), column(g, {NAN})), NumericFault);
}

TEST_CASE("disc_adversarial_loss gradient pushes source up and target down") {
  Graph<double> g;
  auto ds = column(g, {0.5, 0.3}, true);
  auto dt = column(g, {0.5, 0.7}, true);
  const std::vector<Var<double>> wrt{ds, dt};
  const auto grads = backward(disc_adversarial_loss(ds, dt), wrt);
  for (double v : grads.at(ds.id()).data()) CHECK(v < 0.0);
  for (double v : grads.at(dt.id()).data()) CHECK(v > 0.0);
}

TEST_CASE("encoder_adversarial_loss values and gradient sign") {
  Graph<double> g;
  CHECK(encoder_adversarial_loss(column(g, {1.0})).value().item() < 1e-6);
  CHECK(std::abs(encoder_adversarial_loss(column(g, {0.5})).value().item() - std::numbers::ln2) < 1e-9);
  CHECK(encoder_adversarial_loss(column(g, {0.1})).value().item() ==
        doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(std::log(10.0) == doctest::Approx(2.3026).epsilon(1e-4));
  for (double d = 0.01; d < 1.0; d += 0.01) {
    Graph<double> h;
    auto v = column(h, {d}, true);
    const std::vector<Var<double>> wrt{v};
    const auto grads = backward(encoder_adversarial_loss(v), wrt);
    CHECK(grads.at(v.id())[0] < 0.0);
  }
  CHECK_THROWS_AS(encoder_adversarial_loss(column(g, {-0.1})), NumericFault);
}

TEST_CASE("losses are finite and non-negative on in-contract inputs") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    Graph<float> g;
    Tensor<float> ds(Shape{4, 1}), dt(Shape{4, 1});
    for (float& v : ds.data()) v = float(t % 3 == 0 ? std::round(u(rng)) : u(rng));
    for (float& v : dt.data()) v = float(t % 3 == 0 ? std::round(u(rng)) : u(rng));
    const float a = disc_adversarial_loss(g.constant(ds), g.constant(dt)).value().item();
    const float b = encoder_adversarial_loss(g.constant(dt)).value().item();
    CHECK(std::isfinite(a));
    CHECK(std::isfinite(b));
    CHECK(a >= 0.0f);
    CHECK(b >= 0.0f);
    Tensor<float> probs(Shape{1, 3}, {float(u(rng)), 0.f, 0.f});
    probs[1] = 1.f - probs[0];
    const float ce = cross_entropy(g.constant(probs), OneHotLabels({2}, 3)).value().item();
    CHECK(std::isfinite(ce));
    CHECK(ce >= 0.0f);
  }
}

TEST_CASE("cross_entropy descends on a one-parameter logistic toy") {
  // p(class 1 | x) = softmax([0, w * x]); data x = 1 labelled 1, x = -1 labelled 0.
  ParameterSet<double> params;
  params.insert("w", Tensor<double>(Shape{1, 1}, {-0.5}));
  AdamState<double> state(AdamConfig{0.01, 0.9, 0.999, 1e-8});
  const Tensor<double> xs(Shape{2, 1}, {1.0, -1.0});
  const OneHotLabels labels({1, 0}, 2);
  double previous = INFINITY;
  for (int step = 0; step < 10; ++step) {
    Graph<double> g;
    const auto bound = bind(g, params, true);
    auto z = matmul(g.constant(xs), bound.at("w"));
    // logits = [0, z]
    auto logits = matmul(z, g.constant(Tensor<double>(Shape{1, 2}, {0.0, 1.0})));
    auto loss = cross_entropy(softmax(logits, 1), labels);
    CHECK(loss.value().item() < previous);
    previous = loss.value().item();
    adam_step(state, params, backward_named(loss, bound));
  }
}

TEST_CASE("adam_step basics") {
  ParameterSet<double> p;
  p.insert("a", Tensor<double>(Shape{3}, {1, -2, 3}));
  AdamState<double> state(AdamConfig{0.1, 0.5, 0.999, 1e-8});

  NamedGradients<double> zero{{"a", Tensor<double>(Shape{3})}};
  adam_step(state, p, zero);
  CHECK(p.at("a").values() == std::vector<double>{1, -2, 3});
  CHECK(state.step == 1);
  for (double v : state.first_moment.at("a").data()) CHECK(v == 0.0);
  for (double v : state.second_moment.at("a").data()) CHECK(v == 0.0);

  AdamState<double> fresh(AdamConfig{0.1, 0.5, 0.999, 1e-8});
  NamedGradients<double> g{{"a", Tensor<double>(Shape{3}, {0.3, -7.0, 1e-3})}};
  adam_step(fresh, p, g);
  const std::vector<double> expected{1 - 0.1, -2 + 0.1, 3 - 0.1};
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(p.at("a")[i] == doctest::Approx(expected[i]).epsilon(1e-5));
  }

  CHECK_THROWS_AS(adam_step(fresh, p, NamedGradients<double>{}), ContractViolation);
  NamedGradients<double> extra = g;
  extra.emplace("b", Tensor<double>(Shape{1}));
  CHECK_THROWS_AS(adam_step(fresh, p, extra), ContractViolation);
}

TEST_CASE("adam converges on a convex quadratic") {
  ParameterSet<double> p;
  p.insert("x", Tensor<double>(Shape{2}, {3.0, -2.0}));
  AdamState<double> state(AdamConfig{0.05, 0.5, 0.999, 1e-8});
  for (int step = 0; step < 200; ++step) {
    Graph<double> g;
    const auto bound = bind(g, p, true);
    auto x = bound.at("x");
    adam_step(state, p, backward_named(sum(mul(x, x)), bound));
  }
  const auto& x = p.at("x");
  CHECK(std::hypot(x[0], x[1]) < 0.1);
}

TEST_CASE("adam updates each parameter independently of iteration order") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  auto rand = [&](Shape s) {
    Tensor<double> t(std::move(s));
    for (double& v : t.data()) v = n(rng);
    return t;
  };
  const auto a0 = rand(Shape{2, 2}), b0 = rand(Shape{3});
  std::vector<NamedGradients<double>> grads;
  for (int i = 0; i < 5; ++i) grads.push_back({{"a", rand(Shape{2, 2})}, {"b", rand(Shape{3})}});

  ParameterSet<double> joint;
  joint.insert("b", b0);
  joint.insert("a", a0);
  AdamState<double> joint_state;
  for (const auto& g : grads) adam_step(joint_state, joint, g);

  ParameterSet<double> only_a, only_b;
  only_a.insert("a", a0);
  only_b.insert("b", b0);
  AdamState<double> sa, sb;
  for (const auto& g : grads) {
    adam_step(sb, only_b, NamedGradients<double>{{"b", g.at("b")}});
    adam_step(sa, only_a, NamedGradients<double>{{"a", g.at("a")}});
  }
  CHECK(joint.at("a") == only_a.at("a"));
  CHECK(joint.at("b") == only_b.at("b"));
}
