#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "pcnet/data/image.hpp"

namespace pcnet::data {

struct ClaheOptions {
  std::size_t tiles_y = 8;
  std::size_t tiles_x = 8;
  double clip_limit = 2.0;  // relative to a uniform histogram; <= 0 or inf disables clipping
  std::size_t bins = 256;
};

namespace clahe_detail {

/// Clips a tile histogram at `limit` and spreads the excess uniformly, the
/// remainder one count at a time at an even stride.
inline void clip_histogram(std::vector<std::size_t>& hist, std::size_t limit) {
  std::size_t excess = 0;
  for (auto& h : hist)
    if (h > limit) {
      excess += h - limit;
      h = limit;
    }
  const std::size_t bins = hist.size();
  const std::size_t batch = excess / bins;
  std::size_t residual = excess - batch * bins;
  for (auto& h : hist) h += batch;
  if (residual > 0) {
    const std::size_t step = std::max<std::size_t>(bins / residual, 1);
    for (std::size_t i = 0; i < bins && residual > 0; i += step, --residual) ++hist[i];
  }
}

}  // namespace clahe_detail

/// Contrast-limited adaptive histogram equalization of a single-channel
/// image [1, H, W] in [0, 1]. Each tile's clipped histogram gives a CDF
/// lookup table; pixels blend the tables of the four nearest tile centers.
inline Tensor<float> clahe(const Tensor<float>& image, const ClaheOptions& opt = {}) {
  const auto& s = image.shape();
  if (s.rank() != 3 || s[0] != 1) throw ShapeError("clahe: expected a single-channel image [1, H, W]");
  const std::size_t H = s[1], W = s[2], ty = opt.tiles_y, tx = opt.tiles_x, bins = opt.bins;
  if (ty == 0 || tx == 0 || bins < 2) throw ConfigError("clahe: tile grid and bin count must be positive");
  if (H < ty || W < tx)
    throw ShapeError("clahe: image " + std::to_string(H) + "x" + std::to_string(W) + " is smaller than the " +
                     std::to_string(ty) + "x" + std::to_string(tx) + " tile grid");

  std::vector<std::size_t> q(H * W);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double v = std::clamp(static_cast<double>(image[i]), 0.0, 1.0);
    q[i] = static_cast<std::size_t>(std::lround(v * static_cast<double>(bins - 1)));
  }

  const bool clip = opt.clip_limit > 0 && std::isfinite(opt.clip_limit);
  std::vector<std::vector<float>> lut(ty * tx, std::vector<float>(bins));
  for (std::size_t i = 0; i < ty; ++i)
    for (std::size_t j = 0; j < tx; ++j) {
      const std::size_t y0 = i * H / ty, y1 = (i + 1) * H / ty, x0 = j * W / tx, x1 = (j + 1) * W / tx;
      const std::size_t area = (y1 - y0) * (x1 - x0);
      std::vector<std::size_t> hist(bins, 0);
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) ++hist[q[y * W + x]];
      if (clip) {
        const auto limit = std::max<std::size_t>(
            1, static_cast<std::size_t>(opt.clip_limit * static_cast<double>(area) / static_cast<double>(bins)));
        clahe_detail::clip_histogram(hist, limit);
      }
      std::size_t cum = 0;
      auto& table = lut[i * tx + j];
      for (std::size_t b = 0; b < bins; ++b) {
        cum += hist[b];
        table[b] = static_cast<float>(static_cast<double>(cum) / static_cast<double>(area));
      }
    }

  Tensor<float> out(s);
  const double tile_h = static_cast<double>(H) / ty, tile_w = static_cast<double>(W) / tx;
  for (std::size_t y = 0; y < H; ++y) {
    const double fy = (y + 0.5) / tile_h - 0.5;
    auto iy0 = static_cast<std::ptrdiff_t>(std::floor(fy));
    const double wy = fy - iy0;
    const std::size_t ya = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(iy0, 0, ty - 1));
    const std::size_t yb = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(iy0 + 1, 0, ty - 1));
    for (std::size_t x = 0; x < W; ++x) {
      const double fx = (x + 0.5) / tile_w - 0.5;
      auto ix0 = static_cast<std::ptrdiff_t>(std::floor(fx));
      const double wx = fx - ix0;
      const std::size_t xa = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(ix0, 0, tx - 1));
      const std::size_t xb = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(ix0 + 1, 0, tx - 1));
      const std::size_t v = q[y * W + x];
      const double top = (1 - wx) * lut[ya * tx + xa][v] + wx * lut[ya * tx + xb][v];
      const double bot = (1 - wx) * lut[yb * tx + xa][v] + wx * lut[yb * tx + xb][v];
      out[y * W + x] = static_cast<float>(std::clamp((1 - wy) * top + wy * bot, 0.0, 1.0));
    }
  }
  return out;
}

/// out = in^gamma for values in [0, 1].
template <Real T>
Tensor<T> gamma_adjust(const Tensor<T>& image, double gamma = 1.2) {
  if (!(gamma > 0)) throw ConfigError("gamma must be positive");
  Tensor<T> out(image.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T v = image[i];
    if (!(v >= T{0} && v <= T{1})) throw DataError("gamma_adjust: values must lie in [0, 1]");
    out[i] = static_cast<T>(std::pow(static_cast<double>(v), gamma));
  }
  return out;
}

inline constexpr double kHuMin = 0.0;
inline constexpr double kHuMax = 900.0;

/// Clips Hounsfield units to [0, 900] and maps them linearly onto [0, 1].
template <Real T>
Tensor<T> hu_normalize(const Tensor<T>& volume) {
  Tensor<T> out(volume.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = static_cast<T>((std::clamp(static_cast<double>(volume[i]), kHuMin, kHuMax) - kHuMin) / (kHuMax - kHuMin));
  return out;
}

/// Reduces [3, H, W] RGB to its green channel [1, H, W]; single-channel
/// input passes through.
inline Tensor<float> green_channel(const Tensor<float>& image) {
  const auto& s = image.shape();
  if (s.rank() != 3 || (s[0] != 1 && s[0] != 3)) throw ShapeError("green_channel: expected [1|3, H, W], got " + s.str());
  if (s[0] == 1) return image;
  const std::size_t plane = s[1] * s[2];
  Tensor<float> out(Shape{1, s[1], s[2]});
  std::copy_n(image.raw() + plane, plane, out.raw());
  return out;
}

/// Fundus preprocessing: green channel, CLAHE, gamma.
inline Tensor<float> preprocess_fundus(const Tensor<float>& image, const ClaheOptions& clahe_opt = {},
                                       double gamma = 1.2) {
  return gamma_adjust(clahe(green_channel(image), clahe_opt), gamma);
}

}  // namespace pcnet::data
