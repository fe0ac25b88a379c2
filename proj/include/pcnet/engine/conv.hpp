#pragma once

#include <Eigen/Core>
#include <optional>

#include "pcnet/engine/geometry.hpp"
#include "pcnet/engine/tape.hpp"

namespace pcnet {

struct ConvOptions {
  std::vector<std::size_t> stride{1};
  std::vector<std::size_t> padding{0};
};

namespace detail {

template <Real T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvPlan {
  std::size_t n = 0, c_in = 0, c_out = 0;
  Grid3 in, k, out;
  std::array<std::size_t, 3> stride{1, 1, 1}, pad{0, 0, 0};
  std::size_t kvol = 0, cols = 0;  // rows of the unfolded matrix = c_in * kvol; cols = output positions
  bool pointwise = false;          // 1x1 kernel, unit stride, no padding: the input is its own unfolding
};

inline ConvPlan plan_conv(const Shape& x, const Shape& w, const ConvOptions& opt) {
  require_nc_layout(x, "convolve");
  const std::size_t rank = x.rank() - 2;
  if (w.rank() != x.rank())
    throw ShapeError("convolve: kernel rank " + std::to_string(w.rank()) + " does not match input rank " +
                     std::to_string(x.rank()));
  if (w[1] != x[1])
    throw ShapeError("convolve: axis C mismatch, input has " + std::to_string(x[1]) + " channels, kernel expects " +
                     std::to_string(w[1]));
  ConvPlan p;
  p.n = x[0];
  p.c_in = x[1];
  p.c_out = w[0];
  p.in = grid_of(x);
  p.k = grid_of(w);
  p.stride = lift(opt.stride, rank, 1, "convolve stride");
  p.pad = lift(opt.padding, rank, 0, "convolve padding");
  for (std::size_t a = 0; a < 3; ++a) {
    if (p.stride[a] == 0) throw ShapeError("convolve: stride must be positive");
    const std::size_t padded = p.in.e[a] + 2 * p.pad[a];
    if (padded < p.k.e[a])
      throw ShapeError(std::string("convolve: axis ") + axis_name(a, rank) + " padded extent " +
                       std::to_string(padded) + " is smaller than kernel extent " + std::to_string(p.k.e[a]));
    p.out.e[a] = (padded - p.k.e[a]) / p.stride[a] + 1;
  }
  p.kvol = p.k.numel();
  p.cols = p.out.numel();
  p.pointwise = p.kvol == 1 && p.stride == std::array<std::size_t, 3>{1, 1, 1} &&
                p.pad == std::array<std::size_t, 3>{0, 0, 0};
  return p;
}

/// Range [lo, hi) of output positions along one axis whose input tap
/// ow * stride + k - pad falls inside [0, in).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t stride,
                                                       std::size_t pad, std::size_t k) {
  std::size_t lo = 0;
  while (lo < out && lo * stride + k < pad) ++lo;
  std::size_t hi = out;
  while (hi > lo && (hi - 1) * stride + k >= pad + in) --hi;
  return {lo, hi};
}

/// Unfolds one sample [C, spatial] into a (C*kvol) x positions matrix.
template <Real T>
void im2col(const ConvPlan& p, const T* x, T* col) {
  const auto& I = p.in.e;
  const auto& K = p.k.e;
  const auto& O = p.out.e;
  const std::ptrdiff_t in_plane = static_cast<std::ptrdiff_t>(I[1] * I[2]);
  for (std::size_t c = 0; c < p.c_in; ++c) {
    const T* xc = x + c * p.in.numel();
    for (std::size_t kd = 0; kd < K[0]; ++kd)
      for (std::size_t kh = 0; kh < K[1]; ++kh)
        for (std::size_t kw = 0; kw < K[2]; ++kw) {
          T* row = col + ((c * K[0] + kd) * K[1] * K[2] + kh * K[2] + kw) * p.cols;
          for (std::size_t od = 0; od < O[0]; ++od) {
            const std::ptrdiff_t id = std::ptrdiff_t(od * p.stride[0] + kd) - std::ptrdiff_t(p.pad[0]);
            for (std::size_t oh = 0; oh < O[1]; ++oh) {
              T* dst = row + (od * O[1] + oh) * O[2];
              const std::ptrdiff_t ih = std::ptrdiff_t(oh * p.stride[1] + kh) - std::ptrdiff_t(p.pad[1]);
              if (id < 0 || id >= std::ptrdiff_t(I[0]) || ih < 0 || ih >= std::ptrdiff_t(I[1])) {
                std::fill(dst, dst + O[2], T{0});
                continue;
              }
              const T* src = xc + id * in_plane + ih * std::ptrdiff_t(I[2]);
              const auto [lo, hi] = valid_range(O[2], I[2], p.stride[2], p.pad[2], kw);
              std::fill(dst, dst + lo, T{0});
              const std::ptrdiff_t off = std::ptrdiff_t(kw) - std::ptrdiff_t(p.pad[2]);
              if (p.stride[2] == 1) {
                std::copy(src + std::ptrdiff_t(lo) + off, src + std::ptrdiff_t(hi) + off, dst + lo);
              } else {
                for (std::size_t ow = lo; ow < hi; ++ow) dst[ow] = src[std::ptrdiff_t(ow * p.stride[2]) + off];
              }
              std::fill(dst + hi, dst + O[2], T{0});
            }
          }
        }
  }
}

/// Adjoint of im2col: scatters-adds an unfolded gradient back onto [C, spatial].
template <Real T>
void col2im(const ConvPlan& p, const T* col, T* dx) {
  const auto& I = p.in.e;
  const auto& K = p.k.e;
  const auto& O = p.out.e;
  const std::ptrdiff_t in_plane = static_cast<std::ptrdiff_t>(I[1] * I[2]);
  for (std::size_t c = 0; c < p.c_in; ++c) {
    T* xc = dx + c * p.in.numel();
    for (std::size_t kd = 0; kd < K[0]; ++kd)
      for (std::size_t kh = 0; kh < K[1]; ++kh)
        for (std::size_t kw = 0; kw < K[2]; ++kw) {
          const T* row = col + ((c * K[0] + kd) * K[1] * K[2] + kh * K[2] + kw) * p.cols;
          for (std::size_t od = 0; od < O[0]; ++od) {
            const std::ptrdiff_t id = std::ptrdiff_t(od * p.stride[0] + kd) - std::ptrdiff_t(p.pad[0]);
            if (id < 0 || id >= std::ptrdiff_t(I[0])) continue;
            for (std::size_t oh = 0; oh < O[1]; ++oh) {
              const std::ptrdiff_t ih = std::ptrdiff_t(oh * p.stride[1] + kh) - std::ptrdiff_t(p.pad[1]);
              if (ih < 0 || ih >= std::ptrdiff_t(I[1])) continue;
              const T* src = row + (od * O[1] + oh) * O[2];
              T* dst = xc + id * in_plane + ih * std::ptrdiff_t(I[2]);
              const auto [lo, hi] = valid_range(O[2], I[2], p.stride[2], p.pad[2], kw);
              const std::ptrdiff_t off = std::ptrdiff_t(kw) - std::ptrdiff_t(p.pad[2]);
              if (p.stride[2] == 1) {
                T* d = dst + off;
                for (std::size_t ow = lo; ow < hi; ++ow) d[ow] += src[ow];
              } else {
                for (std::size_t ow = lo; ow < hi; ++ow) dst[std::ptrdiff_t(ow * p.stride[2]) + off] += src[ow];
              }
            }
          }
        }
  }
}

}  // namespace detail

/// N-d cross-correlation over 1-3 spatial axes.
/// input [N, C, S...], kernel [C_out, C, K...], bias [C_out] -> [N, C_out, O...]
/// with O = floor((S + 2*pad - K) / stride) + 1 per axis.
template <Real T>
Var convolve(Tape<T>& tape, Var input, Var kernel, std::optional<Var> bias, const ConvOptions& opt = {}) {
  const auto& xs = tape.shape(input);
  const auto& ws = tape.shape(kernel);
  const auto plan = detail::plan_conv(xs, ws, opt);
  if (bias && (tape.shape(*bias).rank() != 1 || tape.shape(*bias)[0] != plan.c_out))
    throw ShapeError("convolve: bias must have shape [" + std::to_string(plan.c_out) + "]");

  const Shape out_shape = detail::with_spatial(xs, plan.c_out, plan.out);
  const std::size_t rows = plan.c_in * plan.kvol;
  tape.add_flops(2ull * plan.n * plan.c_out * rows * plan.cols + (bias ? plan.n * plan.c_out * plan.cols : 0));

  Tensor<T> y(out_shape);
  if (!tape.tracing()) {
    using Mat = detail::RowMat<T>;
    const T* x = tape.value(input).raw();
    const T* w = tape.value(kernel).raw();
    Buffer<T> col(plan.pointwise ? 0 : rows * plan.cols);
    Eigen::Map<const Mat> W(w, plan.c_out, rows);
    for (std::size_t s = 0; s < plan.n; ++s) {
      const T* xs_n = x + s * plan.c_in * plan.in.numel();
      if (!plan.pointwise) detail::im2col(plan, xs_n, col.data());
      Eigen::Map<const Mat> C(plan.pointwise ? xs_n : col.data(), rows, plan.cols);
      Eigen::Map<Mat> Y(y.raw() + s * plan.c_out * plan.cols, plan.c_out, plan.cols);
      Y.noalias() = W * C;
      if (bias) {
        const auto& b = tape.value(*bias);
        for (std::size_t o = 0; o < plan.c_out; ++o) Y.row(o).array() += b[o];
      }
    }
  }

  std::vector<Var> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  return tape.record(
      std::move(y), inputs,
      [=](Tape<T>& t, std::size_t self) {
        using Mat = detail::RowMat<T>;
        const std::size_t rows = plan.c_in * plan.kvol;
        const Tensor<T>& gy = t.grad(self);
        const T* x = t.value(input).raw();
        Eigen::Map<const Mat> W(t.value(kernel).raw(), plan.c_out, rows);
        const bool need_x = t.requires_grad(input);
        const bool need_w = t.requires_grad(kernel);
        const bool need_b = bias && t.requires_grad(*bias);
        T* gx = need_x ? t.grad(input).raw() : nullptr;
        T* gw = need_w ? t.grad(kernel).raw() : nullptr;
        T* gb = need_b ? t.grad(*bias).raw() : nullptr;
        Buffer<T> col(plan.pointwise ? 0 : rows * plan.cols);
        Buffer<T> gcol(plan.pointwise ? 0 : rows * plan.cols);
        for (std::size_t s = 0; s < plan.n; ++s) {
          Eigen::Map<const Mat> GY(gy.raw() + s * plan.c_out * plan.cols, plan.c_out, plan.cols);
          const T* xs_n = x + s * plan.c_in * plan.in.numel();
          if (need_w) {
            if (!plan.pointwise) detail::im2col(plan, xs_n, col.data());
            Eigen::Map<const Mat> C(plan.pointwise ? xs_n : col.data(), rows, plan.cols);
            Eigen::Map<Mat> GW(gw, plan.c_out, rows);
            GW.noalias() += GY * C.transpose();
          }
          if (need_b)
            for (std::size_t o = 0; o < plan.c_out; ++o) gb[o] += GY.row(o).sum();
          if (need_x) {
            T* gxs = gx + s * plan.c_in * plan.in.numel();
            if (plan.pointwise) {
              Eigen::Map<Mat> GX(gxs, rows, plan.cols);
              GX.noalias() += W.transpose() * GY;
            } else {
              Eigen::Map<Mat> GC(gcol.data(), rows, plan.cols);
              GC.noalias() = W.transpose() * GY;
              detail::col2im(plan, gcol.data(), gxs);
            }
          }
        }
      },
      "convolve");
}

}  // namespace pcnet
