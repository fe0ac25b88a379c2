#pragma once

#include <cmath>

#include "pcnet/engine/geometry.hpp"
#include "pcnet/engine/tape.hpp"

namespace pcnet {

namespace detail {

template <Real T, typename Fwd, typename Bwd>
Var unary(Tape<T>& tape, Var x, const char* op, Fwd fwd, Bwd bwd) {
  Tensor<T> y(tape.shape(x));
  tape.add_flops(y.numel());
  if (!tape.tracing()) {
    const auto& xv = tape.value(x);
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = fwd(xv[i]);
  }
  return tape.record(
      std::move(y), {x},
      [=](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        const auto& xv = t.value(x);
        const auto& yv = t.value(self);
        auto& gx = t.grad(x);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += gy[i] * bwd(xv[i], yv[i]);
      },
      op);
}

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return;
  if (a.rank() != b.rank()) throw ShapeError(std::string(op) + ": rank mismatch " + a.str() + " vs " + b.str());
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (a[i] != b[i])
      throw ShapeError(std::string(op) + ": extent mismatch on axis " + std::to_string(i) + " (" + a.str() +
                       " vs " + b.str() + ")");
}

}  // namespace detail

template <Real T>
Var relu(Tape<T>& tape, Var x) {
  return detail::unary(
      tape, x, "relu", [](T v) { return v > T{0} ? v : T{0}; },
      [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <Real T>
Var sigmoid(Tape<T>& tape, Var x) {
  return detail::unary(
      tape, x, "sigmoid",
      [](T v) {
        // split on sign so exp never overflows
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

/// Multiplies every element by a constant.
template <Real T>
Var scale(Tape<T>& tape, Var x, T factor) {
  return detail::unary(
      tape, x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <Real T>
Var add(Tape<T>& tape, Var a, Var b) {
  detail::require_same(tape.shape(a), tape.shape(b), "add");
  Tensor<T> y(tape.shape(a));
  tape.add_flops(y.numel());
  if (!tape.tracing()) {
    const auto &av = tape.value(a), &bv = tape.value(b);
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[i] + bv[i];
  }
  return tape.record(
      std::move(y), {a, b},
      [=](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        for (Var v : {a, b}) {
          if (!t.requires_grad(v)) continue;
          auto& g = t.grad(v);
          for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[i];
        }
      },
      "add");
}

/// a - b
template <Real T>
Var subtract(Tape<T>& tape, Var a, Var b) {
  detail::require_same(tape.shape(a), tape.shape(b), "subtract");
  Tensor<T> y(tape.shape(a));
  tape.add_flops(y.numel());
  if (!tape.tracing()) {
    const auto &av = tape.value(a), &bv = tape.value(b);
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[i] - bv[i];
  }
  return tape.record(
      std::move(y), {a, b},
      [=](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        if (t.requires_grad(a)) {
          auto& g = t.grad(a);
          for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[i];
        }
        if (t.requires_grad(b)) {
          auto& g = t.grad(b);
          for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= gy[i];
        }
      },
      "subtract");
}

/// Element-wise product.
template <Real T>
Var multiply(Tape<T>& tape, Var a, Var b) {
  detail::require_same(tape.shape(a), tape.shape(b), "multiply");
  Tensor<T> y(tape.shape(a));
  tape.add_flops(y.numel());
  if (!tape.tracing()) {
    const auto &av = tape.value(a), &bv = tape.value(b);
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[i] * bv[i];
  }
  return tape.record(
      std::move(y), {a, b},
      [=](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        const auto &av = t.value(a), &bv = t.value(b);
        if (t.requires_grad(a)) {
          auto& g = t.grad(a);
          for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[i] * bv[i];
        }
        if (t.requires_grad(b)) {
          auto& g = t.grad(b);
          for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gy[i] * av[i];
        }
      },
      "multiply");
}

/// Scales each (sample, channel) plane of `features` [N, C, S...] by the
/// matching entry of `weights` [N, C, 1...].
template <Real T>
Var channel_scale(Tape<T>& tape, Var features, Var weights) {
  const auto& fs = tape.shape(features);
  const auto& ws = tape.shape(weights);
  detail::require_nc_layout(fs, "channel_scale");
  if (ws.rank() != fs.rank()) throw ShapeError("channel_scale: weight rank mismatch " + ws.str() + " vs " + fs.str());
  if (ws[1] != fs[1])
    throw ShapeError("channel_scale: broadcast mismatch on channel axis (" + std::to_string(ws[1]) + " weights for " +
                     std::to_string(fs[1]) + " channels)");
  if (ws[0] != fs[0]) throw ShapeError("channel_scale: batch axis mismatch " + ws.str() + " vs " + fs.str());
  if (ws.spatial_numel() != 1) throw ShapeError("channel_scale: weight spatial extents must all be 1, got " + ws.str());
  const std::size_t planes = fs[0] * fs[1], area = fs.spatial_numel();
  Tensor<T> y(fs);
  tape.add_flops(y.numel());
  if (!tape.tracing()) {
    const auto &fv = tape.value(features), &wv = tape.value(weights);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t k = 0; k < area; ++k) y[p * area + k] = fv[p * area + k] * wv[p];
  }
  return tape.record(
      std::move(y), {features, weights},
      [=](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        const auto &fv = t.value(features), &wv = t.value(weights);
        if (t.requires_grad(features)) {
          auto& g = t.grad(features);
          for (std::size_t p = 0; p < planes; ++p)
            for (std::size_t k = 0; k < area; ++k) g[p * area + k] += gy[p * area + k] * wv[p];
        }
        if (t.requires_grad(weights)) {
          auto& g = t.grad(weights);
          for (std::size_t p = 0; p < planes; ++p) {
            T acc{0};
            for (std::size_t k = 0; k < area; ++k) acc += gy[p * area + k] * fv[p * area + k];
            g[p] += acc;
          }
        }
      },
      "channel_scale");
}

/// Concatenates along the channel axis (axis 1).
template <Real T>
Var concat(Tape<T>& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  const Shape& s0 = tape.shape(parts[0]);
  detail::require_nc_layout(s0, "concat");
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = tape.shape(p);
    if (s.rank() != s0.rank()) throw ShapeError("concat: rank mismatch " + s.str() + " vs " + s0.str());
    for (std::size_t a = 0; a < s.rank(); ++a)
      if (a != 1 && s[a] != s0[a])
        throw ShapeError("concat: extent mismatch on axis " + std::to_string(a) + " (" + s.str() + " vs " + s0.str() +
                         ")");
    channels += s[1];
  }
  std::vector<std::size_t> dims = s0.dims();
  dims[1] = channels;
  const std::size_t n = s0[0], area = s0.spatial_numel();
  Tensor<T> y{Shape(dims)};
  if (!tape.tracing()) {
    std::size_t c_off = 0;
    for (const auto& p : parts) {
      const auto& v = tape.value(p);
      const std::size_t c = v.shape()[1];
      for (std::size_t s = 0; s < n; ++s)
        std::copy_n(v.raw() + s * c * area, c * area, y.raw() + (s * channels + c_off) * area);
      c_off += c;
    }
  }
  return tape.record(
      std::move(y), parts,
      [=](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        std::size_t c_off = 0;
        for (const auto& p : parts) {
          const std::size_t c = t.shape(p)[1];
          if (t.requires_grad(p)) {
            auto& g = t.grad(p);
            for (std::size_t s = 0; s < n; ++s) {
              const T* src = gy.raw() + (s * channels + c_off) * area;
              T* dst = g.raw() + s * c * area;
              for (std::size_t k = 0; k < c * area; ++k) dst[k] += src[k];
            }
          }
          c_off += c;
        }
      },
      "concat");
}

/// Splits along the channel axis into consecutive groups of the given sizes.
template <Real T>
std::vector<Var> split(Tape<T>& tape, Var x, const std::vector<std::size_t>& sizes) {
  const Shape& xs = tape.shape(x);
  detail::require_nc_layout(xs, "split");
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (total != xs[1]) throw ShapeError("split: sizes sum to " + std::to_string(total) + ", channel extent is " + std::to_string(xs[1]));
  const std::size_t n = xs[0], channels = xs[1], area = xs.spatial_numel();
  std::vector<Var> out;
  std::size_t c_off = 0;
  for (auto c : sizes) {
    std::vector<std::size_t> dims = xs.dims();
    dims[1] = c;
    Tensor<T> y{Shape(dims)};
    if (!tape.tracing()) {
      const auto& v = tape.value(x);
      for (std::size_t s = 0; s < n; ++s)
        std::copy_n(v.raw() + (s * channels + c_off) * area, c * area, y.raw() + s * c * area);
    }
    out.push_back(tape.record(
        std::move(y), {x},
        [=](Tape<T>& t, std::size_t self) {
          const auto& gy = t.grad(self);
          auto& g = t.grad(x);
          for (std::size_t s = 0; s < n; ++s) {
            const T* src = gy.raw() + s * c * area;
            T* dst = g.raw() + (s * channels + c_off) * area;
            for (std::size_t k = 0; k < c * area; ++k) dst[k] += src[k];
          }
        },
        "split"));
    c_off += c;
  }
  return out;
}

/// Sum of all elements as a [1] tensor.
template <Real T>
Var sum(Tape<T>& tape, Var x) {
  Tensor<T> y(Shape{1});
  tape.add_flops(tape.shape(x).numel());
  if (!tape.tracing()) {
    T acc{0};
    for (T v : tape.value(x).data()) acc += v;
    y[0] = acc;
  }
  return tape.record(
      std::move(y), {x},
      [=](Tape<T>& t, std::size_t self) {
        const T g0 = t.grad(self)[0];
        auto& g = t.grad(x);
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += g0;
      },
      "sum");
}

}  // namespace pcnet
