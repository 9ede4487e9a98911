#include "sadda/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sadda {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

enum class Broadcast { none, bias };

Broadcast check_binary(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return Broadcast::none;
  if (b.rank() == 1 && b[0] == a[a.rank() - 1]) return Broadcast::bias;
  shape_error(op, a, b);
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.rank()) {
    throw ContractViolation(std::string(op) + ": axis " + std::to_string(axis) +
                            " out of range for shape " + s.str());
  }
  AxisSplit out;
  for (std::size_t i = 0; i < axis; ++i) out.outer *= s[i];
  out.len = s[axis];
  for (std::size_t i = axis + 1; i < s.rank(); ++i) out.inner *= s[i];
  return out;
}

Shape keep_axis(const Shape& s, std::size_t axis) {
  auto dims = s.dims();
  dims[axis] = 1;
  return Shape(std::move(dims));
}

template <typename T, typename F>
Tensor<T> map_values(const Tensor<T>& x, F f) {
  Tensor<T> out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

// Reduce a (rows x cols) gradient over rows into a rank-1 bias gradient.
template <typename T>
Tensor<T> reduce_to_bias(const Tensor<T>& g, std::size_t cols) {
  Tensor<T> out(Shape{cols});
  auto src = g.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i % cols] += src[i];
  return out;
}

// ---------------------------------------------------------------------------
// Convolution plumbing (NHWC, kernels kh x kw x c_in x c_out).

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t k_h = 0, k_w = 0, out_c = 0;
  std::size_t stride = 1;
  WindowGeometry rows, cols;

  std::size_t patch_rows() const { return batch * rows.out * cols.out; }
  std::size_t patch_len() const { return k_h * k_w * in_c; }
};

ConvGeometry conv_geometry(const char* op, const Shape& input,
                           const Shape& kernels, std::size_t stride,
                           Padding padding) {
  if (input.rank() != 4 || kernels.rank() != 4) {
    shape_error(std::string(op) + " expects rank-4 input and kernels", input,
                kernels);
  }
  if (stride == 0) throw ContractViolation(std::string(op) + ": stride must be positive");
  if (kernels[2] != input[3]) {
    shape_error(std::string(op) + ": channel mismatch", input, kernels);
  }
  ConvGeometry g;
  g.batch = input[0];
  g.in_h = input[1];
  g.in_w = input[2];
  g.in_c = input[3];
  g.k_h = kernels[0];
  g.k_w = kernels[1];
  g.out_c = kernels[3];
  g.stride = stride;
  g.rows = window_geometry(g.in_h, g.k_h, stride, padding);
  g.cols = window_geometry(g.in_w, g.k_w, stride, padding);
  if (g.k_h > g.in_h + g.rows.pad_total || g.k_w > g.in_w + g.cols.pad_total) {
    shape_error(std::string(op) + ": kernel larger than padded input", input,
                kernels);
  }
  return g;
}

template <typename T>
std::vector<T> im2col(const T* x, const ConvGeometry& g) {
  std::vector<T> cols(g.patch_rows() * g.patch_len(), T{0});
  T* dst = cols.data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oy = 0; oy < g.rows.out; ++oy) {
      for (std::size_t ox = 0; ox < g.cols.out; ++ox) {
        for (std::size_t ky = 0; ky < g.k_h; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.rows.pad_before);
          const bool row_ok = iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.in_h);
          for (std::size_t kx = 0; kx < g.k_w; ++kx, dst += g.in_c) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.cols.pad_before);
            if (!row_ok || ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            const T* src = x + ((n * g.in_h + iy) * g.in_w + ix) * g.in_c;
            std::copy(src, src + g.in_c, dst);
          }
        }
      }
    }
  }
  return cols;
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* x) {
  const T* src = cols;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oy = 0; oy < g.rows.out; ++oy) {
      for (std::size_t ox = 0; ox < g.cols.out; ++ox) {
        for (std::size_t ky = 0; ky < g.k_h; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.rows.pad_before);
          const bool row_ok = iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.in_h);
          for (std::size_t kx = 0; kx < g.k_w; ++kx, src += g.in_c) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.cols.pad_before);
            if (!row_ok || ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            T* dst = x + ((n * g.in_h + iy) * g.in_w + ix) * g.in_c;
            for (std::size_t c = 0; c < g.in_c; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

// Geometry of the forward conv whose adjoint is conv2d_transpose(input, k, s).
ConvGeometry transpose_geometry(const Shape& input, const Shape& kernels,
                                std::size_t stride) {
  if (input.rank() != 4 || kernels.rank() != 4) {
    shape_error("conv2d_transpose expects rank-4 input and kernels", input,
                kernels);
  }
  if (kernels[3] != input[3]) {
    shape_error("conv2d_transpose: channel mismatch", input, kernels);
  }
  if (stride == 0) throw ContractViolation("conv2d_transpose: stride must be positive");
  const Shape full{input[0], input[1] * stride, input[2] * stride, kernels[2]};
  ConvGeometry g = conv_geometry("conv2d_transpose", full, kernels, stride,
                                 Padding::same);
  if (g.rows.out != input[1] || g.cols.out != input[2]) {
    shape_error("conv2d_transpose: inconsistent geometry", input, kernels);
  }
  return g;
}

}  // namespace

WindowGeometry window_geometry(std::size_t in, std::size_t kernel,
                               std::size_t stride, Padding padding) {
  WindowGeometry g;
  g.in = in;
  if (padding == Padding::same) {
    g.out = (in + stride - 1) / stride;
    const std::size_t needed = (g.out - 1) * stride + kernel;
    g.pad_total = needed > in ? needed - in : 0;
    g.pad_before = g.pad_total / 2;
  } else {
    if (kernel > in) {
      throw ContractViolation("valid window: kernel " + std::to_string(kernel) +
                              " exceeds input " + std::to_string(in));
    }
    g.out = (in - kernel) / stride + 1;
  }
  return g;
}

namespace kernels {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_error("matmul", a.shape(), b.shape());
  }
  Tensor<T> out(Shape{a.dim(0), b.dim(1)});
  MutMap<T>(out.raw(), a.dim(0), b.dim(1)).noalias() =
      ConstMap<T>(a.raw(), a.dim(0), a.dim(1)) *
      ConstMap<T>(b.raw(), b.dim(0), b.dim(1));
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels,
                 std::size_t stride, Padding padding) {
  const ConvGeometry g =
      conv_geometry("conv2d", input.shape(), kernels.shape(), stride, padding);
  const std::vector<T> cols = im2col(input.raw(), g);
  Tensor<T> out(Shape{g.batch, g.rows.out, g.cols.out, g.out_c});
  MutMap<T>(out.raw(), g.patch_rows(), g.out_c).noalias() =
      ConstMap<T>(cols.data(), g.patch_rows(), g.patch_len()) *
      ConstMap<T>(kernels.raw(), g.patch_len(), g.out_c);
  return out;
}

template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& kernels,
                           std::size_t stride) {
  const ConvGeometry g =
      transpose_geometry(input.shape(), kernels.shape(), stride);
  RowMat<T> patches = ConstMap<T>(input.raw(), g.patch_rows(), g.out_c) *
                      ConstMap<T>(kernels.raw(), g.patch_len(), g.out_c).transpose();
  Tensor<T> out(Shape{g.batch, g.in_h, g.in_w, g.in_c});
  col2im(patches.data(), g, out.raw());
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const AxisSplit s = split_axis("softmax", x.shape(), axis);
  Tensor<T> out(x.shape());
  const T* src = x.raw();
  T* dst = out.raw();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      T m = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < s.len; ++k) m = std::max(m, src[base + k * s.inner]);
      T z = 0;
      for (std::size_t k = 0; k < s.len; ++k) {
        const T e = std::exp(src[base + k * s.inner] - m);
        dst[base + k * s.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < s.len; ++k) dst[base + k * s.inner] /= z;
    }
  }
  return out;
}

template <typename T>
Tensor<T> logsumexp(const Tensor<T>& x, std::size_t axis) {
  const AxisSplit s = split_axis("logsumexp", x.shape(), axis);
  Tensor<T> out(keep_axis(x.shape(), axis));
  const T* src = x.raw();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      T m = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < s.len; ++k) m = std::max(m, src[base + k * s.inner]);
      T z = 0;
      for (std::size_t k = 0; k < s.len; ++k) z += std::exp(src[base + k * s.inner] - m);
      out[o * s.inner + i] = m + std::log(z);
    }
  }
  return out;
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  const Broadcast bc = check_binary("add", a.shape(), b.shape());
  Tensor<T> out = a.value();
  const auto bv = b.value().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += bv[i % bv.size()];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(
      "add", std::move(out), {ia, ib},
      [ia, ib, bc](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        gr.accumulate(ia, g);
        if (gr.requires_grad(ib)) {
          gr.accumulate(ib, bc == Broadcast::bias
                                ? reduce_to_bias(g, gr.value(ib).numel())
                                : g);
        }
      });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  const Broadcast bc = check_binary("sub", a.shape(), b.shape());
  Tensor<T> out = a.value();
  const auto bv = b.value().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= bv[i % bv.size()];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(
      "sub", std::move(out), {ia, ib},
      [ia, ib, bc](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        gr.accumulate(ia, g);
        if (gr.requires_grad(ib)) {
          Tensor<T> neg = map_values(g, [](T v) { return -v; });
          gr.accumulate(ib, bc == Broadcast::bias
                                ? reduce_to_bias(neg, gr.value(ib).numel())
                                : std::move(neg));
        }
      });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  const Broadcast bc = check_binary("mul", a.shape(), b.shape());
  Tensor<T> out = a.value();
  const auto bv = b.value().data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] *= bv[i % bv.size()];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(
      "mul", std::move(out), {ia, ib},
      [ia, ib, bc](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        const auto av = gr.value(ia).data();
        const auto bvals = gr.value(ib).data();
        if (gr.requires_grad(ia)) {
          Tensor<T> da = g;
          auto d = da.data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] *= bvals[i % bvals.size()];
          gr.accumulate(ia, std::move(da));
        }
        if (gr.requires_grad(ib)) {
          Tensor<T> db = g;
          auto d = db.data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] *= av[i];
          gr.accumulate(ib, bc == Broadcast::bias
                                ? reduce_to_bias(db, bvals.size())
                                : std::move(db));
        }
      });
}

template <typename T>
Var<T> affine(Var<T> x, T scale, T shift) {
  Tensor<T> out = map_values(x.value(), [=](T v) { return scale * v + shift; });
  const std::size_t ix = x.id();
  return x.graph().record(
      "affine", std::move(out), {ix},
      [ix, scale](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        gr.accumulate(ix, map_values(g, [=](T v) { return scale * v; }));
      });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tensor<T> out = kernels::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(
      "matmul", std::move(out), {ia, ib},
      [ia, ib](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        const Tensor<T>& av = gr.value(ia);
        const Tensor<T>& bv = gr.value(ib);
        const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
        const ConstMap<T> gm(g.raw(), m, n);
        if (gr.requires_grad(ia)) {
          Tensor<T> da(av.shape());
          MutMap<T>(da.raw(), m, k).noalias() =
              gm * ConstMap<T>(bv.raw(), k, n).transpose();
          gr.accumulate(ia, std::move(da));
        }
        if (gr.requires_grad(ib)) {
          Tensor<T> db(bv.shape());
          MutMap<T>(db.raw(), k, n).noalias() =
              ConstMap<T>(av.raw(), m, k).transpose() * gm;
          gr.accumulate(ib, std::move(db));
        }
      });
}

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> kernels, std::size_t stride, Padding padding) {
  Tensor<T> out = kernels::conv2d(input.value(), kernels.value(), stride, padding);
  const std::size_t ix = input.id(), ik = kernels.id();
  return input.graph().record(
      "conv2d", std::move(out), {ix, ik},
      [ix, ik, stride, padding](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        const Tensor<T>& xv = gr.value(ix);
        const Tensor<T>& kv = gr.value(ik);
        const ConvGeometry geo =
            conv_geometry("conv2d", xv.shape(), kv.shape(), stride, padding);
        const ConstMap<T> gm(g.raw(), geo.patch_rows(), geo.out_c);
        if (gr.requires_grad(ik)) {
          const std::vector<T> cols = im2col(xv.raw(), geo);
          Tensor<T> dk(kv.shape());
          MutMap<T>(dk.raw(), geo.patch_len(), geo.out_c).noalias() =
              ConstMap<T>(cols.data(), geo.patch_rows(), geo.patch_len()).transpose() * gm;
          gr.accumulate(ik, std::move(dk));
        }
        if (gr.requires_grad(ix)) {
          RowMat<T> dcols =
              gm * ConstMap<T>(kv.raw(), geo.patch_len(), geo.out_c).transpose();
          Tensor<T> dx(xv.shape());
          col2im(dcols.data(), geo, dx.raw());
          gr.accumulate(ix, std::move(dx));
        }
      });
}

template <typename T>
Var<T> conv2d_transpose(Var<T> input, Var<T> kernels, std::size_t stride) {
  Tensor<T> out = kernels::conv2d_transpose(input.value(), kernels.value(), stride);
  const std::size_t ix = input.id(), ik = kernels.id();
  return input.graph().record(
      "conv2d_transpose", std::move(out), {ix, ik},
      [ix, ik, stride](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        const Tensor<T>& yv = gr.value(ix);
        const Tensor<T>& kv = gr.value(ik);
        const ConvGeometry geo = transpose_geometry(yv.shape(), kv.shape(), stride);
        const std::vector<T> gcols = im2col(g.raw(), geo);
        const ConstMap<T> gc(gcols.data(), geo.patch_rows(), geo.patch_len());
        if (gr.requires_grad(ik)) {
          Tensor<T> dk(kv.shape());
          MutMap<T>(dk.raw(), geo.patch_len(), geo.out_c).noalias() =
              gc.transpose() * ConstMap<T>(yv.raw(), geo.patch_rows(), geo.out_c);
          gr.accumulate(ik, std::move(dk));
        }
        if (gr.requires_grad(ix)) {
          Tensor<T> dy(yv.shape());
          MutMap<T>(dy.raw(), geo.patch_rows(), geo.out_c).noalias() =
              gc * ConstMap<T>(kv.raw(), geo.patch_len(), geo.out_c);
          gr.accumulate(ix, std::move(dy));
        }
      });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = map_values(x.value(), [](T v) { return v > T{0} ? v : T{0}; });
  const std::size_t ix = x.id();
  return x.graph().record(
      "relu", std::move(out), {ix},
      [ix](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        Tensor<T> dx = g;
        const auto xv = gr.value(ix).data();
        auto d = dx.data();
        for (std::size_t i = 0; i < d.size(); ++i) {
          if (!(xv[i] > T{0})) d[i] = T{0};
        }
        gr.accumulate(ix, std::move(dx));
      });
}

template <typename T>
Var<T> leaky_relu(Var<T> x, T alpha) {
  Tensor<T> out =
      map_values(x.value(), [alpha](T v) { return v > T{0} ? v : alpha * v; });
  const std::size_t ix = x.id();
  return x.graph().record(
      "leaky_relu", std::move(out), {ix},
      [ix, alpha](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        Tensor<T> dx = g;
        const auto xv = gr.value(ix).data();
        auto d = dx.data();
        for (std::size_t i = 0; i < d.size(); ++i) {
          if (!(xv[i] > T{0})) d[i] *= alpha;
        }
        gr.accumulate(ix, std::move(dx));
      });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> out = map_values(x.value(), [](T v) {
    if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
    const T e = std::exp(v);
    return e / (T{1} + e);
  });
  const std::size_t ix = x.id();
  return x.graph().record(
      "sigmoid", std::move(out), {ix},
      [ix](const Tensor<T>& g, std::size_t self, Graph<T>& gr) {
        Tensor<T> dx = g;
        const auto y = gr.value(self).data();
        auto d = dx.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i] * (T{1} - y[i]);
        gr.accumulate(ix, std::move(dx));
      });
}

template <typename T>
Var<T> exp(Var<T> x) {
  Tensor<T> out = map_values(x.value(), [](T v) { return std::exp(v); });
  const std::size_t ix = x.id();
  return x.graph().record(
      "exp", std::move(out), {ix},
      [ix](const Tensor<T>& g, std::size_t self, Graph<T>& gr) {
        Tensor<T> dx = g;
        const auto y = gr.value(self).data();
        auto d = dx.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i];
        gr.accumulate(ix, std::move(dx));
      });
}

template <typename T>
Var<T> log(Var<T> x) {
  for (T v : x.value().data()) {
    if (!(v > T{0})) {
      throw NumericFault("log of non-positive value " + std::to_string(v));
    }
  }
  Tensor<T> out = map_values(x.value(), [](T v) { return std::log(v); });
  const std::size_t ix = x.id();
  return x.graph().record(
      "log", std::move(out), {ix},
      [ix](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        Tensor<T> dx = g;
        const auto xv = gr.value(ix).data();
        auto d = dx.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] /= xv[i];
        gr.accumulate(ix, std::move(dx));
      });
}

template <typename T>
Var<T> clamp(Var<T> x, T lo, T hi) {
  if (!(lo <= hi)) throw ContractViolation("clamp: lo must not exceed hi");
  Tensor<T> out = map_values(x.value(), [=](T v) { return std::clamp(v, lo, hi); });
  const std::size_t ix = x.id();
  return x.graph().record(
      "clamp", std::move(out), {ix},
      [ix, lo, hi](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        Tensor<T> dx = g;
        const auto xv = gr.value(ix).data();
        auto d = dx.data();
        for (std::size_t i = 0; i < d.size(); ++i) {
          if (xv[i] < lo || xv[i] > hi) d[i] = T{0};
        }
        gr.accumulate(ix, std::move(dx));
      });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var<T> sum(Var<T> x) {
  T total = 0;
  for (T v : x.value().data()) total += v;
  const std::size_t ix = x.id();
  return x.graph().record(
      "sum", Tensor<T>::scalar(total), {ix},
      [ix](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        gr.accumulate(ix, Tensor<T>(gr.value(ix).shape(), g.item()));
      });
}

template <typename T>
Var<T> sum(Var<T> x, std::size_t axis) {
  const AxisSplit s = split_axis("sum", x.shape(), axis);
  Tensor<T> out(keep_axis(x.shape(), axis));
  const T* src = x.value().raw();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.len; ++k) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        out[o * s.inner + i] += src[(o * s.len + k) * s.inner + i];
      }
    }
  }
  const std::size_t ix = x.id();
  return x.graph().record(
      "sum_axis", std::move(out), {ix},
      [ix, s](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        Tensor<T> dx(gr.value(ix).shape());
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t k = 0; k < s.len; ++k) {
            for (std::size_t i = 0; i < s.inner; ++i) {
              dx[(o * s.len + k) * s.inner + i] = g[o * s.inner + i];
            }
          }
        }
        gr.accumulate(ix, std::move(dx));
      });
}

template <typename T>
Var<T> mean(Var<T> x) {
  return affine(sum(x), T{1} / static_cast<T>(x.value().numel()), T{0});
}

template <typename T>
Var<T> mean(Var<T> x, std::size_t axis) {
  const std::size_t len = split_axis("mean", x.shape(), axis).len;
  return affine(sum(x, axis), T{1} / static_cast<T>(len), T{0});
}

template <typename T>
Var<T> logsumexp(Var<T> x, std::size_t axis) {
  Tensor<T> out = kernels::logsumexp(x.value(), axis);
  const AxisSplit s = split_axis("logsumexp", x.shape(), axis);
  const std::size_t ix = x.id();
  return x.graph().record(
      "logsumexp", std::move(out), {ix},
      [ix, s, axis](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        Tensor<T> dx = kernels::softmax(gr.value(ix), axis);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t k = 0; k < s.len; ++k) {
            for (std::size_t i = 0; i < s.inner; ++i) {
              dx[(o * s.len + k) * s.inner + i] *= g[o * s.inner + i];
            }
          }
        }
        gr.accumulate(ix, std::move(dx));
      });
}

template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis) {
  Tensor<T> out = kernels::softmax(x.value(), axis);
  const AxisSplit s = split_axis("softmax", x.shape(), axis);
  const std::size_t ix = x.id();
  return x.graph().record(
      "softmax", std::move(out), {ix},
      [ix, s](const Tensor<T>& g, std::size_t self, Graph<T>& gr) {
        const Tensor<T>& y = gr.value(self);
        Tensor<T> dx(y.shape());
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.len * s.inner + i;
            T dot = 0;
            for (std::size_t k = 0; k < s.len; ++k) {
              dot += g[base + k * s.inner] * y[base + k * s.inner];
            }
            for (std::size_t k = 0; k < s.len; ++k) {
              const std::size_t at = base + k * s.inner;
              dx[at] = y[at] * (g[at] - dot);
            }
          }
        }
        gr.accumulate(ix, std::move(dx));
      });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  const Shape& s = x.shape();
  if (s.rank() != 4) {
    throw ContractViolation("global_avg_pool expects b x h x w x c, got " + s.str());
  }
  const std::size_t b = s[0], hw = s[1] * s[2], c = s[3];
  Tensor<T> out(Shape{b, c});
  const T* src = x.value().raw();
  const T inv = T{1} / static_cast<T>(hw);
  for (std::size_t n = 0; n < b; ++n) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t ch = 0; ch < c; ++ch) out[n * c + ch] += src[(n * hw + p) * c + ch];
    }
    for (std::size_t ch = 0; ch < c; ++ch) out[n * c + ch] *= inv;
  }
  const std::size_t ix = x.id();
  return x.graph().record(
      "global_avg_pool", std::move(out), {ix},
      [ix, b, hw, c, inv](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        Tensor<T> dx(gr.value(ix).shape());
        for (std::size_t n = 0; n < b; ++n) {
          for (std::size_t p = 0; p < hw; ++p) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              dx[(n * hw + p) * c + ch] = g[n * c + ch] * inv;
            }
          }
        }
        gr.accumulate(ix, std::move(dx));
      });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id();
  return x.graph().record(
      "reshape", std::move(out), {ix},
      [ix](const Tensor<T>& g, std::size_t, Graph<T>& gr) {
        gr.accumulate(ix, g.reshaped(gr.value(ix).shape()));
      });
}

template <typename T>
Var<T> flatten(Var<T> x) {
  const std::size_t b = x.shape()[0];
  return reshape(x, Shape{b, x.value().numel() / b});
}

#define SADDA_INSTANTIATE_OPS(T)                                              \
  template Var<T> add(Var<T>, Var<T>);                                        \
  template Var<T> sub(Var<T>, Var<T>);                                        \
  template Var<T> mul(Var<T>, Var<T>);                                        \
  template Var<T> affine(Var<T>, T, T);                                       \
  template Var<T> matmul(Var<T>, Var<T>);                                     \
  template Var<T> conv2d(Var<T>, Var<T>, std::size_t, Padding);               \
  template Var<T> conv2d_transpose(Var<T>, Var<T>, std::size_t);              \
  template Var<T> relu(Var<T>);                                               \
  template Var<T> leaky_relu(Var<T>, T);                                      \
  template Var<T> sigmoid(Var<T>);                                            \
  template Var<T> exp(Var<T>);                                                \
  template Var<T> log(Var<T>);                                                \
  template Var<T> clamp(Var<T>, T, T);                                        \
  template Var<T> sum(Var<T>);                                                \
  template Var<T> sum(Var<T>, std::size_t);                                   \
  template Var<T> mean(Var<T>);                                               \
  template Var<T> mean(Var<T>, std::size_t);                                  \
  template Var<T> logsumexp(Var<T>, std::size_t);                             \
  template Var<T> softmax(Var<T>, std::size_t);                               \
  template Var<T> global_avg_pool(Var<T>);                                    \
  template Var<T> reshape(Var<T>, Shape);                                     \
  template Var<T> flatten(Var<T>);                                            \
  template Tensor<T> kernels::conv2d(const Tensor<T>&, const Tensor<T>&,      \
                                     std::size_t, Padding);                   \
  template Tensor<T> kernels::conv2d_transpose(const Tensor<T>&,              \
                                               const Tensor<T>&, std::size_t); \
  template Tensor<T> kernels::matmul(const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> kernels::softmax(const Tensor<T>&, std::size_t);         \
  template Tensor<T> kernels::logsumexp(const Tensor<T>&, std::size_t);

SADDA_INSTANTIATE_OPS(float)
SADDA_INSTANTIATE_OPS(double)
SADDA_INSTANTIATE_OPS(long double)

#undef SADDA_INSTANTIATE_OPS

}  // namespace sadda
