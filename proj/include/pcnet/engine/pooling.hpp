#pragma once

#include <limits>
#include <memory>

#include "pcnet/engine/geometry.hpp"
#include "pcnet/engine/tape.hpp"

namespace pcnet {

/// Max pooling without padding. Output extent per axis is
/// floor((L - window) / stride) + 1. Ties resolve to the first maximum in
/// row-major window order, and backward routes the gradient there.
template <Real T>
Var max_pool(Tape<T>& tape, Var input, const std::vector<std::size_t>& window,
             const std::vector<std::size_t>& stride) {
  const auto& xs = tape.shape(input);
  detail::require_nc_layout(xs, "max_pool");
  const std::size_t rank = xs.rank() - 2;
  const auto in = detail::grid_of(xs);
  const auto win = detail::lift(window, rank, 1, "max_pool window");
  const auto str = detail::lift(stride, rank, 1, "max_pool stride");
  detail::Grid3 out;
  for (std::size_t a = 0; a < 3; ++a) {
    if (str[a] == 0 || win[a] == 0) throw ShapeError("max_pool: window and stride must be positive");
    if (win[a] > in.e[a])
      throw ShapeError(std::string("max_pool: window ") + std::to_string(win[a]) + " exceeds extent " +
                       std::to_string(in.e[a]) + " on axis " + detail::axis_name(a, rank));
    out.e[a] = (in.e[a] - win[a]) / str[a] + 1;
  }
  const std::size_t planes = xs[0] * xs[1];
  Tensor<T> y(detail::with_spatial(xs, xs[1], out));
  tape.add_flops(static_cast<std::uint64_t>(planes) * out.numel() * win[0] * win[1] * win[2]);

  auto argmax = std::make_shared<std::vector<std::size_t>>(tape.tracing() ? 0 : y.numel());
  if (!tape.tracing()) {
    const T* x = tape.value(input).raw();
    std::size_t o = 0;
    for (std::size_t p = 0; p < planes; ++p) {
      const std::size_t base = p * in.numel();
      for (std::size_t od = 0; od < out.e[0]; ++od)
        for (std::size_t oh = 0; oh < out.e[1]; ++oh)
          for (std::size_t ow = 0; ow < out.e[2]; ++ow, ++o) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t best_i = base;
            bool first = true;
            for (std::size_t kd = 0; kd < win[0]; ++kd)
              for (std::size_t kh = 0; kh < win[1]; ++kh)
                for (std::size_t kw = 0; kw < win[2]; ++kw) {
                  const std::size_t i = base + ((od * str[0] + kd) * in.e[1] + oh * str[1] + kh) * in.e[2] +
                                        ow * str[2] + kw;
                  if (first || x[i] > best) {
                    best = x[i];
                    best_i = i;
                    first = false;
                  }
                }
            y[o] = best;
            (*argmax)[o] = best_i;
          }
    }
  }
  return tape.record(
      std::move(y), {input},
      [=](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        auto& gx = t.grad(input);
        for (std::size_t o = 0; o < gy.numel(); ++o) gx[(*argmax)[o]] += gy[o];
      },
      "max_pool");
}

namespace detail {
inline std::size_t bin_begin(std::size_t i, std::size_t len, std::size_t bins) { return i * len / bins; }
}  // namespace detail

/// Adaptive average pooling to `out` bins per spatial axis. Bin i of an axis
/// of length L covers [floor(i*L/out), floor((i+1)*L/out)).
template <Real T>
Var adaptive_avg_pool(Tape<T>& tape, Var input, const std::vector<std::size_t>& out_extent) {
  const auto& xs = tape.shape(input);
  detail::require_nc_layout(xs, "adaptive_avg_pool");
  const std::size_t rank = xs.rank() - 2;
  const auto in = detail::grid_of(xs);
  const auto ext = detail::lift(out_extent, rank, 1, "adaptive_avg_pool extent");
  detail::Grid3 out;
  for (std::size_t a = 0; a < 3; ++a) {
    if (ext[a] == 0 || ext[a] > in.e[a])
      throw ShapeError(std::string("adaptive_avg_pool: output extent ") + std::to_string(ext[a]) +
                       " exceeds input extent " + std::to_string(in.e[a]) + " on axis " +
                       detail::axis_name(a, rank));
    out.e[a] = ext[a];
  }
  const std::size_t planes = xs[0] * xs[1];
  Tensor<T> y(detail::with_spatial(xs, xs[1], out));
  tape.add_flops(static_cast<std::uint64_t>(planes) * in.numel());

  // Visits every (output cell, input cell) pair of its bin.
  auto for_each_bin = [in, out, planes](auto&& fn) {
    std::size_t o = 0;
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t od = 0; od < out.e[0]; ++od)
        for (std::size_t oh = 0; oh < out.e[1]; ++oh)
          for (std::size_t ow = 0; ow < out.e[2]; ++ow, ++o) {
            const std::size_t d0 = detail::bin_begin(od, in.e[0], out.e[0]),
                              d1 = detail::bin_begin(od + 1, in.e[0], out.e[0]);
            const std::size_t h0 = detail::bin_begin(oh, in.e[1], out.e[1]),
                              h1 = detail::bin_begin(oh + 1, in.e[1], out.e[1]);
            const std::size_t w0 = detail::bin_begin(ow, in.e[2], out.e[2]),
                              w1 = detail::bin_begin(ow + 1, in.e[2], out.e[2]);
            const std::size_t count = (d1 - d0) * (h1 - h0) * (w1 - w0);
            for (std::size_t d = d0; d < d1; ++d)
              for (std::size_t h = h0; h < h1; ++h)
                for (std::size_t w = w0; w < w1; ++w)
                  fn(o, p * in.numel() + (d * in.e[1] + h) * in.e[2] + w, count);
          }
  };

  if (!tape.tracing()) {
    const T* x = tape.value(input).raw();
    std::vector<std::size_t> counts(y.numel());
    for_each_bin([&](std::size_t o, std::size_t i, std::size_t count) {
      y[o] += x[i];
      counts[o] = count;
    });
    for (std::size_t o = 0; o < y.numel(); ++o) y[o] /= static_cast<T>(counts[o]);
  }
  return tape.record(
      std::move(y), {input},
      [=](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        auto& gx = t.grad(input);
        for_each_bin([&](std::size_t o, std::size_t i, std::size_t count) { gx[i] += gy[o] / static_cast<T>(count); });
      },
      "adaptive_avg_pool");
}

}  // namespace pcnet
