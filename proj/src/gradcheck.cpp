#include "sadda/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

namespace sadda {

namespace {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// Which side of every breakpoint each kinked op's input falls on.
std::vector<bool> kink_pattern(const Graph<Extended>& g) {
  std::vector<bool> bits;
  for (std::size_t id = 0; id < g.size(); ++id) {
    const char* op = g.op(id);
    const bool sign_kink = std::strcmp(op, "relu") == 0 || std::strcmp(op, "leaky_relu") == 0;
    const bool clamp_kink = std::strcmp(op, "clamp") == 0;
    if (!sign_kink && !clamp_kink) continue;
    const auto in = g.value(g.inputs(id)[0]).data();
    const auto out = g.value(id).data();
    for (std::size_t i = 0; i < in.size(); ++i) {
      bits.push_back(sign_kink ? in[i] > 0 : in[i] == out[i]);
    }
  }
  return bits;
}

struct Probe {
  Extended value;
  std::vector<bool> kinks;
};

Probe evaluate(const ScalarFunction& f, const std::vector<Tensor<Extended>>& inputs) {
  Graph<Extended> g;
  std::vector<Var<Extended>> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(g.constant(t));
  const Extended value = f.oracle(g, vars).value().item();
  return {value, kink_pattern(g)};
}

}  // namespace

GradCheckReport grad_check_report(const ScalarFunction& f,
                                  const std::vector<Tensor<double>>& inputs,
                                  const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw ContractViolation("grad_check: eps must be positive");

  Graph<double> g;
  std::vector<Var<double>> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(g.parameter(t));
  Var<double> loss = f.checked(g, vars);
  const GradientMap<double> grads = g.backward(loss, vars);

  std::vector<Tensor<Extended>> probe;
  for (const auto& t : inputs) probe.push_back(t.cast<Extended>());
  const std::vector<bool> base_kinks = evaluate(f, probe).kinks;

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  const auto eps = static_cast<Extended>(options.eps);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::size_t n = inputs[k].numel();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_input != 0 && options.max_coords_per_input < n) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
    }
    const Tensor<double>& analytic = grads.at(vars[k].id());
    for (std::size_t i : coords) {
      const Extended original = probe[k][i];
      probe[k][i] = original + eps;
      const Probe up = evaluate(f, probe);
      probe[k][i] = original - eps;
      const Probe down = evaluate(f, probe);
      probe[k][i] = original;
      if (up.kinks != base_kinks || down.kinks != base_kinks) {
        ++report.skipped_at_kinks;
        continue;
      }
      const auto numeric = static_cast<double>((up.value - down.value) / (2 * eps));
      report.max_rel_error =
          std::max(report.max_rel_error, relative_error(analytic[i], numeric));
      ++report.probes;
    }
  }
  return report;
}

template <typename T>
Var<T> corrupt_backward(Var<T> x, double factor) {
  const std::size_t ix = x.id();
  return x.graph().record(
      "corrupt_backward", x.value(), {ix},
      [ix, factor](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        Tensor<T> dx = g;
        for (T& v : dx.data()) v *= static_cast<T>(factor);
        gr.accumulate(ix, std::move(dx));
      });
}

template Var<double> corrupt_backward(Var<double>, double);
template Var<Extended> corrupt_backward(Var<Extended>, double);

}  // namespace sadda
