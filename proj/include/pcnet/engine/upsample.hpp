#pragma once

#include <cmath>

#include "pcnet/engine/geometry.hpp"
#include "pcnet/engine/tape.hpp"

namespace pcnet {

namespace detail {

struct LinearTap {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

/// Half-pixel (align-corners false) source taps for an axis of length `len`
/// upsampled by `scale`. Sources left of the first center clamp to it.
inline std::vector<LinearTap> linear_taps(std::size_t len, std::size_t scale) {
  std::vector<LinearTap> taps(len * scale);
  for (std::size_t i = 0; i < taps.size(); ++i) {
    double src = (static_cast<double>(i) + 0.5) / static_cast<double>(scale) - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > len - 1) i0 = len - 1;
    const std::size_t i1 = std::min(i0 + 1, len - 1);
    taps[i] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

/// Visits (source offset, destination offset, weight) triples for resampling
/// one lifted axis of a [planes, D, H, W] buffer by `scale`.
template <typename Fn>
void for_each_axis_tap(std::size_t planes, const Grid3& in, std::size_t axis, std::size_t scale, Fn&& fn) {
  const auto taps = linear_taps(in.e[axis], scale);
  std::size_t outer = planes, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= in.e[a];
  for (std::size_t a = axis + 1; a < 3; ++a) inner *= in.e[a];
  const std::size_t lin = in.e[axis], lout = lin * scale;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < lout; ++j) {
      const auto& tp = taps[j];
      fn((o * lin + tp.i0) * inner, (o * lin + tp.i1) * inner, (o * lout + j) * inner, inner, tp.w1);
    }
}

template <Real T>
void resample_axis(std::size_t planes, const Grid3& in, std::size_t axis, std::size_t scale, const T* src, T* dst) {
  for_each_axis_tap(planes, in, axis, scale,
                    [&](std::size_t s0, std::size_t s1, std::size_t d, std::size_t inner, double w) {
                      const T w1 = static_cast<T>(w), w0 = T{1} - w1;
                      for (std::size_t k = 0; k < inner; ++k) dst[d + k] = w0 * src[s0 + k] + w1 * src[s1 + k];
                    });
}

template <Real T>
void resample_axis_adjoint(std::size_t planes, const Grid3& in, std::size_t axis, std::size_t scale, T* acc,
                           const T* grad) {
  for_each_axis_tap(planes, in, axis, scale,
                    [&](std::size_t s0, std::size_t s1, std::size_t d, std::size_t inner, double w) {
                      const T w1 = static_cast<T>(w), w0 = T{1} - w1;
                      for (std::size_t k = 0; k < inner; ++k) {
                        acc[s0 + k] += w0 * grad[d + k];
                        acc[s1 + k] += w1 * grad[d + k];
                      }
                    });
}

}  // namespace detail

/// Bi/trilinear up-sampling by an integer factor with half-pixel centers:
/// output sample i reads source position (i + 0.5) / scale - 0.5, clamped to
/// the border.
template <Real T>
Var upsample_linear(Tape<T>& tape, Var input, std::size_t scale = 2) {
  const auto& xs = tape.shape(input);
  detail::require_nc_layout(xs, "upsample_linear");
  if (scale == 0) throw ShapeError("upsample_linear: scale must be positive");
  const std::size_t rank = xs.rank() - 2;
  const std::size_t planes = xs[0] * xs[1];
  const auto in = detail::grid_of(xs);
  detail::Grid3 out = in;
  for (std::size_t a = 3 - rank; a < 3; ++a) out.e[a] *= scale;

  // Grids after each axis pass.
  std::vector<detail::Grid3> stages{in};
  for (std::size_t a = 3 - rank; a < 3; ++a) {
    auto g = stages.back();
    g.e[a] *= scale;
    stages.push_back(g);
  }
  for (std::size_t k = 1; k < stages.size(); ++k) tape.add_flops(4ull * planes * stages[k].numel());

  Tensor<T> y(detail::with_spatial(xs, xs[1], out));
  if (!tape.tracing()) {
    std::vector<T> cur(tape.value(input).data().begin(), tape.value(input).data().end());
    for (std::size_t k = 0; k + 1 < stages.size(); ++k) {
      std::vector<T> next(planes * stages[k + 1].numel());
      detail::resample_axis(planes, stages[k], 3 - rank + k, scale, cur.data(), next.data());
      cur.swap(next);
    }
    std::copy(cur.begin(), cur.end(), y.raw());
  }
  return tape.record(
      std::move(y), {input},
      [=](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        std::vector<T> cur(gy.data().begin(), gy.data().end());
        for (std::size_t k = stages.size() - 1; k > 0; --k) {
          std::vector<T> prev(planes * stages[k - 1].numel(), T{0});
          detail::resample_axis_adjoint(planes, stages[k - 1], 3 - rank + (k - 1), scale, prev.data(), cur.data());
          cur.swap(prev);
        }
        auto& gx = t.grad(input);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += cur[i];
      },
      "upsample_linear");
}

}  // namespace pcnet
