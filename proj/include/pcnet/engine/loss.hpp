#pragma once

#include <algorithm>
#include <cmath>

#include "pcnet/engine/pointwise.hpp"

namespace pcnet {

inline constexpr double kBceEpsilon = 1e-7;

/// Mean binary cross-entropy between probabilities `pred` and a binary
/// target. Predictions are clamped to [eps, 1 - eps]; the clamped region has
/// zero gradient.
template <Real T>
Var bce_loss(Tape<T>& tape, Var pred, const Tensor<T>& target) {
  detail::require_same(tape.shape(pred), target.shape(), "bce_loss");
  for (T v : target.data())
    if (v != T{0} && v != T{1}) throw DataError("bce_loss: target values must be 0 or 1");
  const T lo = static_cast<T>(kBceEpsilon), hi = T{1} - static_cast<T>(kBceEpsilon);
  const std::size_t m = target.numel();
  tape.add_flops(4ull * m);
  Tensor<T> y(Shape{1});
  if (!tape.tracing()) {
    const auto& p = tape.value(pred);
    double acc = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const double pc = std::clamp(p[i], lo, hi);
      acc -= target[i] != T{0} ? std::log(pc) : std::log(1.0 - pc);
    }
    y[0] = static_cast<T>(acc / static_cast<double>(m));
  }
  auto tgt = std::make_shared<Tensor<T>>(target);
  return tape.record(
      std::move(y), {pred},
      [=](Tape<T>& t, std::size_t self) {
        const T g0 = t.grad(self)[0] / static_cast<T>(m);
        const auto& p = t.value(pred);
        auto& gp = t.grad(pred);
        for (std::size_t i = 0; i < m; ++i) {
          if (p[i] < lo || p[i] > hi) continue;
          gp[i] += g0 * (p[i] - (*tgt)[i]) / (p[i] * (T{1} - p[i]));
        }
      },
      "bce_loss");
}

}  // namespace pcnet
