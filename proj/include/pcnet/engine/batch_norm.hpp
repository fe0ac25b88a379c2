#pragma once

#include <cmath>
#include <memory>

#include "pcnet/engine/geometry.hpp"
#include "pcnet/engine/tape.hpp"

namespace pcnet {

enum class BnMode { kTrain, kEval };

/// Running statistics of one batch-norm layer (buffers, not parameters).
template <Real T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  explicit BatchNormStats(std::size_t channels = 1)
      : running_mean(Tensor<T>::zeros(Shape{channels})), running_var(Tensor<T>::ones(Shape{channels})) {}
};

/// Per-channel normalization over all non-channel axes of [N, C, S...].
/// Train mode normalizes with biased batch statistics and folds the
/// unbiased batch variance into the running stats with `momentum`.
template <Real T>
Var batch_norm(Tape<T>& tape, Var input, Var gamma, Var beta, BatchNormStats<T>& stats, BnMode mode,
               T momentum = T(0.1), T epsilon = T(1e-5)) {
  const Shape& xs = tape.shape(input);
  detail::require_nc_layout(xs, "batch_norm");
  const std::size_t n = xs[0], channels = xs[1], area = xs.spatial_numel();
  for (Var v : {gamma, beta})
    if (tape.shape(v).rank() != 1 || tape.shape(v)[0] != channels)
      throw ShapeError("batch_norm: affine parameters must have shape [" + std::to_string(channels) + "], got " +
                       tape.shape(v).str());
  if (stats.running_mean.numel() != channels || stats.running_var.numel() != channels)
    throw ShapeError("batch_norm: running statistics do not match " + std::to_string(channels) + " channels");
  const std::size_t count = n * area;
  if (count == 0) throw ShapeError("batch_norm: zero batch*spatial count");

  Tensor<T> y(xs);
  tape.add_flops(4ull * y.numel());
  auto xhat = std::make_shared<std::vector<T>>();
  auto inv_std = std::make_shared<std::vector<T>>(channels);
  const bool train = mode == BnMode::kTrain;

  if (!tape.tracing()) {
    const auto& x = tape.value(input);
    const auto &g = tape.value(gamma), &b = tape.value(beta);
    xhat->resize(x.numel());
    for (std::size_t c = 0; c < channels; ++c) {
      T mean, var;
      if (train) {
        double s = 0, ss = 0;
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t i = 0; i < area; ++i) s += x[(k * channels + c) * area + i];
        mean = static_cast<T>(s / count);
        for (std::size_t k = 0; k < n; ++k)
          for (std::size_t i = 0; i < area; ++i) {
            const double d = x[(k * channels + c) * area + i] - mean;
            ss += d * d;
          }
        var = static_cast<T>(ss / count);
        const T unbiased = count > 1 ? static_cast<T>(ss / (count - 1)) : var;
        stats.running_mean[c] = (T{1} - momentum) * stats.running_mean[c] + momentum * mean;
        stats.running_var[c] = (T{1} - momentum) * stats.running_var[c] + momentum * unbiased;
      } else {
        mean = stats.running_mean[c];
        var = stats.running_var[c];
      }
      const T is = T{1} / std::sqrt(var + epsilon);
      (*inv_std)[c] = is;
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < area; ++i) {
          const std::size_t j = (k * channels + c) * area + i;
          (*xhat)[j] = (x[j] - mean) * is;
          y[j] = g[c] * (*xhat)[j] + b[c];
        }
    }
  }

  return tape.record(
      std::move(y), {input, gamma, beta},
      [=](Tape<T>& t, std::size_t self) {
        const auto& gy = t.grad(self);
        const auto& g = t.value(gamma);
        std::vector<T> sum_gy(channels, T{0}), sum_gy_xhat(channels, T{0});
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < area; ++i) {
              const std::size_t j = (k * channels + c) * area + i;
              sum_gy[c] += gy[j];
              sum_gy_xhat[c] += gy[j] * (*xhat)[j];
            }
        if (t.requires_grad(gamma)) {
          auto& gg = t.grad(gamma);
          for (std::size_t c = 0; c < channels; ++c) gg[c] += sum_gy_xhat[c];
        }
        if (t.requires_grad(beta)) {
          auto& gb = t.grad(beta);
          for (std::size_t c = 0; c < channels; ++c) gb[c] += sum_gy[c];
        }
        if (t.requires_grad(input)) {
          auto& gx = t.grad(input);
          const T m = static_cast<T>(count);
          for (std::size_t c = 0; c < channels; ++c) {
            const T scale = g[c] * (*inv_std)[c];
            for (std::size_t k = 0; k < n; ++k)
              for (std::size_t i = 0; i < area; ++i) {
                const std::size_t j = (k * channels + c) * area + i;
                if (train)
                  gx[j] += scale * (gy[j] - sum_gy[c] / m - (*xhat)[j] * sum_gy_xhat[c] / m);
                else
                  gx[j] += scale * gy[j];
              }
          }
        }
      },
      "batch_norm");
}

}  // namespace pcnet
