#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. None of these share code with the library they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

#include "pcnet/engine.hpp"

namespace oracle {

using pcnet::Shape;
using pcnet::Tensor;

/// Direct convolution, every loop spelled out. 2D: [N,C,H,W]; 3D: [N,C,D,H,W].
inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w, const std::vector<double>& bias,
                             std::size_t stride, std::size_t pad) {
  const auto &xs = x.shape(), &ws = w.shape();
  const std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3], O = ws[0], KH = ws[2], KW = ws[3];
  const std::size_t OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
  Tensor<double> y(Shape{N, O, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t j = 0; j < OW; ++j) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < KH; ++ki)
              for (std::size_t kj = 0; kj < KW; ++kj) {
                const long r = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                const long q = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
                acc += x.at(n, c, r, q) * w.at(o, c, ki, kj);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

inline Tensor<double> conv3d(const Tensor<double>& x, const Tensor<double>& w, const std::vector<double>& bias,
                             std::size_t stride, std::size_t pad) {
  const auto &xs = x.shape(), &ws = w.shape();
  const std::size_t N = xs[0], C = xs[1], D = xs[2], H = xs[3], W = xs[4], O = ws[0], KD = ws[2], KH = ws[3],
                    KW = ws[4];
  const std::size_t OD = (D + 2 * pad - KD) / stride + 1, OH = (H + 2 * pad - KH) / stride + 1,
                    OW = (W + 2 * pad - KW) / stride + 1;
  Tensor<double> y(Shape{N, O, OD, OH, OW});
  auto inside = [](long v, std::size_t len) { return v >= 0 && v < static_cast<long>(len); };
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t a = 0; a < OD; ++a)
        for (std::size_t i = 0; i < OH; ++i)
          for (std::size_t j = 0; j < OW; ++j) {
            double acc = bias.empty() ? 0.0 : bias[o];
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t kd = 0; kd < KD; ++kd)
                for (std::size_t ki = 0; ki < KH; ++ki)
                  for (std::size_t kj = 0; kj < KW; ++kj) {
                    const long p = static_cast<long>(a * stride + kd) - static_cast<long>(pad);
                    const long r = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                    const long q = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                    if (!inside(p, D) || !inside(r, H) || !inside(q, W)) continue;
                    acc += x.at(n, c, p, r, q) * w.at(o, c, kd, ki, kj);
                  }
            y.at(n, o, a, i, j) = acc;
          }
  return y;
}

/// Non-overlapping k x k window maximum of an [N, C, H, W] tensor.
template <typename T>
Tensor<T> window_max_2d(const Tensor<T>& x, std::size_t k) {
  const auto& s = x.shape();
  Tensor<T> y(Shape{s[0], s[1], s[2] / k, s[3] / k});
  for (std::size_t n = 0; n < s[0]; ++n)
    for (std::size_t c = 0; c < s[1]; ++c)
      for (std::size_t i = 0; i < s[2] / k; ++i)
        for (std::size_t j = 0; j < s[3] / k; ++j) {
          T m = x.at(n, c, i * k, j * k);
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) m = std::max(m, x.at(n, c, i * k + a, j * k + b));
          y.at(n, c, i, j) = m;
        }
  return y;
}

/// Bin means with bins [floor(i*L/out), floor((i+1)*L/out)) on an [N, C, H, W] tensor.
inline Tensor<double> bin_mean_2d(const Tensor<double>& x, std::size_t oh, std::size_t ow) {
  const auto& s = x.shape();
  Tensor<double> y(Shape{s[0], s[1], oh, ow});
  for (std::size_t n = 0; n < s[0]; ++n)
    for (std::size_t c = 0; c < s[1]; ++c)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          const std::size_t h0 = i * s[2] / oh, h1 = (i + 1) * s[2] / oh, w0 = j * s[3] / ow, w1 = (j + 1) * s[3] / ow;
          double acc = 0;
          for (std::size_t a = h0; a < h1; ++a)
            for (std::size_t b = w0; b < w1; ++b) acc += x.at(n, c, a, b);
          y.at(n, c, i, j) = acc / static_cast<double>((h1 - h0) * (w1 - w0));
        }
  return y;
}

/// Half-pixel linear interpolation of a 1D signal at double resolution.
inline std::vector<double> upsample_1d(const std::vector<double>& v) {
  std::vector<double> out(2 * v.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double src = (static_cast<double>(i) + 0.5) / 2.0 - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(v.size() - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double f = src - static_cast<double>(lo);
    out[i] = (1 - f) * v[lo] + f * v[hi];
  }
  return out;
}

/// Pairwise AUC: (#pos > neg + 0.5 #ties) / (P N).
inline double auc_pairs(const std::vector<double>& s, const std::vector<bool>& l) {
  std::uint64_t twice = 0, P = 0, N = 0;
  for (std::size_t i = 0; i < s.size(); ++i) (l[i] ? P : N)++;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (l[i])
      for (std::size_t j = 0; j < s.size(); ++j)
        if (!l[j]) twice += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
  return static_cast<double>(twice) / (2.0 * static_cast<double>(P) * static_cast<double>(N));
}

/// Component sizes by union-find over a lifted [D, H, W] grid with full
/// (8 / 26) connectivity. Returns per-voxel root ids (or -1) and sizes.
struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

inline std::vector<std::size_t> component_sizes(const std::vector<std::uint8_t>& m, std::size_t D, std::size_t H,
                                                std::size_t W, std::vector<long>* root_of = nullptr) {
  UnionFind uf(m.size());
  auto idx = [&](std::size_t z, std::size_t y, std::size_t x) { return (z * H + y) * W + x; };
  for (std::size_t z = 0; z < D; ++z)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        if (!m[idx(z, y, x)]) continue;
        for (long dz = -1; dz <= 1; ++dz)
          for (long dy = -1; dy <= 1; ++dy)
            for (long dx = -1; dx <= 1; ++dx) {
              const long nz = static_cast<long>(z) + dz, ny = static_cast<long>(y) + dy, nx = static_cast<long>(x) + dx;
              if (nz < 0 || ny < 0 || nx < 0 || nz >= static_cast<long>(D) || ny >= static_cast<long>(H) ||
                  nx >= static_cast<long>(W))
                continue;
              const std::size_t j = idx(nz, ny, nx);
              if (m[j]) uf.unite(idx(z, y, x), j);
            }
      }
  std::vector<std::size_t> count(m.size(), 0);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) ++count[uf.find(i)];
  std::vector<std::size_t> sizes;
  if (root_of) root_of->assign(m.size(), -1);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] && root_of) (*root_of)[i] = static_cast<long>(uf.find(i));
    if (count[i]) sizes.push_back(count[i]);
  }
  return sizes;
}

/// Keeps components with at least min_size voxels, via the union-find oracle.
inline std::vector<std::uint8_t> filter_components(const std::vector<std::uint8_t>& m, std::size_t D, std::size_t H,
                                                   std::size_t W, std::size_t min_size) {
  std::vector<long> root;
  component_sizes(m, D, H, W, &root);
  std::vector<std::size_t> count(m.size(), 0);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (root[i] >= 0) ++count[static_cast<std::size_t>(root[i])];
  std::vector<std::uint8_t> out(m.size(), 0);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (root[i] >= 0 && count[static_cast<std::size_t>(root[i])] >= min_size) out[i] = 1;
  return out;
}

/// Central finite-difference check of d f / d x at sampled coordinates.
/// rel_err = |analytic - numeric| / max(|analytic|, |numeric|, floor).
struct GradCheck {
  double max_rel = 0;
  std::size_t checked = 0;
};

inline GradCheck finite_difference(std::vector<double>& x, const std::function<double()>& f,
                                   const std::vector<double>& analytic, const std::vector<std::size_t>& coords,
                                   double h = 1e-3, double floor = 1e-2) {
  GradCheck out;
  for (auto i : coords) {
    const double saved = x[i];
    x[i] = saved + h;
    const double fp = f();
    x[i] = saved - h;
    const double fm = f();
    x[i] = saved;
    const double numeric = (fp - fm) / (2 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    out.max_rel = std::max(out.max_rel, std::abs(analytic[i] - numeric) / denom);
    ++out.checked;
  }
  return out;
}

inline double entropy(const std::vector<std::size_t>& hist) {
  double n = 0;
  for (auto h : hist) n += static_cast<double>(h);
  double e = 0;
  for (auto h : hist)
    if (h) {
      const double p = static_cast<double>(h) / n;
      e -= p * std::log2(p);
    }
  return e;
}

/// Plain global histogram equalization of 256-level values: v -> cdf(v) / n.
inline std::vector<double> global_equalize(const std::vector<std::size_t>& levels) {
  std::vector<std::size_t> hist(256, 0);
  for (auto v : levels) ++hist[v];
  std::vector<double> cdf(256);
  std::size_t cum = 0;
  for (std::size_t b = 0; b < 256; ++b) {
    cum += hist[b];
    cdf[b] = static_cast<double>(cum) / static_cast<double>(levels.size());
  }
  std::vector<double> out(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) out[i] = cdf[levels[i]];
  return out;
}

template <typename T>
Tensor<T> random_tensor(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

/// Order-sensitive digest of a byte range chained onto `seed`.
inline std::size_t digest(const void* data, std::size_t n, std::size_t seed = 0) {
  const std::size_t h = std::hash<std::string_view>{}(std::string_view(static_cast<const char*>(data), n));
  return seed ^ (h + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2));
}

}  // namespace oracle
