#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "sadda/graph.hpp"

namespace sadda {

/// Precision used for the finite-difference probes. The recorded gradient
/// under test is always computed in double.
using Extended = long double;

/// A scalar loss built from graph-bound inputs, available at both the
/// checked precision and the oracle precision. Construct it from a generic
/// lambda `[](auto& graph, auto inputs) { ... }`.
struct ScalarFunction {
  std::function<Var<double>(Graph<double>&, std::span<const Var<double>>)> checked;
  std::function<Var<Extended>(Graph<Extended>&, std::span<const Var<Extended>>)> oracle;

  template <typename F>
    requires(!std::same_as<std::decay_t<F>, ScalarFunction>)
  ScalarFunction(F f) : checked(f), oracle(f) {}  // NOLINT(google-explicit-constructor)
};

struct GradCheckOptions {
  double eps = 1e-6;
  /// When non-zero, at most this many coordinates per input are probed,
  /// chosen by `seed`.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  /// Probes discarded because x - eps and x + eps fall on different sides of
  /// a relu / leaky_relu / clamp breakpoint.
  std::size_t skipped_at_kinks = 0;
};

/// Compares recorded gradients with central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / 2 eps and reports the worst relative
/// error |a - b| / max(|a|, |b|, 1e-8).
GradCheckReport grad_check_report(const ScalarFunction& f,
                                  const std::vector<Tensor<double>>& inputs,
                                  const GradCheckOptions& options = {});

inline double grad_check(const ScalarFunction& f,
                         const std::vector<Tensor<double>>& inputs,
                         const GradCheckOptions& options = {}) {
  return grad_check_report(f, inputs, options).max_rel_error;
}

/// Single-input form: `f` is a generic lambda `[](auto x) { ... }`.
template <typename F>
double grad_check(F f, const Tensor<double>& x, double eps = 1e-6) {
  ScalarFunction wrapped = [f](auto&, auto v) { return f(v[0]); };
  GradCheckOptions options;
  options.eps = eps;
  return grad_check(wrapped, {x}, options);
}

/// Identity in the forward pass; scales the incoming gradient by `factor`.
/// Used for fault injection only.
template <typename T>
Var<T> corrupt_backward(Var<T> x, double factor = 1.5);

/// One registered differentiable operation of the verification suite.
struct GradCheckCase {
  std::string name;
  /// Runs one seeded trial and returns its worst relative error. When
  /// `corrupt` is set, the op's backward rule is deliberately perturbed.
  std::function<double(std::uint64_t trial_seed, bool corrupt)> trial;
};

struct GradCheckOutcome {
  std::string name;
  double worst_error = 0.0;
  std::size_t trials = 0;
  bool passed = false;
};

/// Every differentiable op plus the composed encoder -> discriminator ->
/// adversarial-loss graph.
std::vector<GradCheckCase> gradcheck_registry();

/// Runs `trials` seeded trials of every case. `corrupt_op` names a case whose
/// backward is fault-injected (empty for none).
std::vector<GradCheckOutcome> run_gradcheck_suite(std::size_t trials,
                                                  double tolerance,
                                                  const std::string& corrupt_op = {});

}  // namespace sadda
