#pragma once

#include <cstddef>
#include <vector>

#include "sadda/graph.hpp"
#include "sadda/tensor.hpp"

namespace sadda {

enum class Padding { same, valid };

/// Output extent and leading pad of a strided window along one axis.
/// "same" pads symmetrically with zeros; an odd total puts the extra cell
/// at the bottom/right.
struct WindowGeometry {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t pad_before = 0;
  std::size_t pad_total = 0;
};

WindowGeometry window_geometry(std::size_t in, std::size_t kernel,
                               std::size_t stride, Padding padding);

// Elementwise. `b` may also be a rank-1 bias broadcast over the last axis of a.
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);

/// scale * x + shift.
template <typename T> Var<T> affine(Var<T> x, T scale, T shift);

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);

/// NHWC cross-correlation. kernels: k x k x c_in x c_out.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernels, std::size_t stride, Padding padding);

/// Linear adjoint of conv2d(., kernels, stride, same) taken from an input of
/// spatial size (h * stride, w * stride). kernels: k x k x c_out x c_in, where
/// c_in is the channel count of `input`.
template <typename T>
Var<T> conv2d_transpose(Var<T> input, Var<T> kernels, std::size_t stride);

template <typename T> Var<T> relu(Var<T> x);
template <typename T> Var<T> leaky_relu(Var<T> x, T alpha);
template <typename T> Var<T> sigmoid(Var<T> x);
template <typename T> Var<T> exp(Var<T> x);
/// Throws NumericFault on any non-positive input.
template <typename T> Var<T> log(Var<T> x);
/// Gradient passes inside [lo, hi] and is zero outside.
template <typename T> Var<T> clamp(Var<T> x, T lo, T hi);

/// Reductions. The axis forms keep the reduced axis with extent 1.
template <typename T> Var<T> sum(Var<T> x);
template <typename T> Var<T> sum(Var<T> x, std::size_t axis);
template <typename T> Var<T> mean(Var<T> x);
template <typename T> Var<T> mean(Var<T> x, std::size_t axis);
template <typename T> Var<T> logsumexp(Var<T> x, std::size_t axis);
template <typename T> Var<T> softmax(Var<T> x, std::size_t axis);

/// b x h x w x c -> b x c.
template <typename T> Var<T> global_avg_pool(Var<T> x);

template <typename T> Var<T> reshape(Var<T> x, Shape shape);
/// b x ... -> b x (product of the rest).
template <typename T> Var<T> flatten(Var<T> x);

/// Convenience wrapper over Graph::backward.
template <typename T>
GradientMap<T> backward(Var<T> loss, const std::vector<Var<T>>& wrt) {
  return loss.graph().backward(loss, wrt);
}

namespace kernels {

// Raw tensor routines shared by the recorded ops and by test oracles that
// need forward values without a graph.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels,
                 std::size_t stride, Padding padding);
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& kernels,
                           std::size_t stride);
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);
template <typename T>
Tensor<T> logsumexp(const Tensor<T>& x, std::size_t axis);

}  // namespace kernels

}  // namespace sadda
