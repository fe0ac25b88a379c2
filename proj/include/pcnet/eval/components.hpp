#pragma once

#include <array>
#include <vector>

#include "pcnet/engine/tensor.hpp"

namespace pcnet::eval {

using Mask = Tensor<std::uint8_t>;

namespace components_detail {

/// Spatial extents lifted to [D, H, W]: a leading unit axis is a channel
/// axis, the remaining two or three axes are spatial.
inline std::array<std::size_t, 3> spatial_grid(const Shape& s, std::size_t& rank) {
  std::vector<std::size_t> d = s.dims();
  if (d.size() >= 3 && d.front() == 1) d.erase(d.begin());
  if (d.size() < 2 || d.size() > 3) throw ShapeError("components: expected [1,] H, W or [1,] D, H, W, got " + s.str());
  rank = d.size();
  std::array<std::size_t, 3> e{1, 1, 1};
  for (std::size_t a = 0; a < rank; ++a) e[3 - rank + a] = d[a];
  return e;
}

}  // namespace components_detail

/// Connected-component labels (1-based, 0 = background) with full
/// connectivity: 8 neighbours in 2D, 26 in 3D. Returns the component count.
inline std::size_t label_components(const Mask& mask, std::vector<std::uint32_t>& labels,
                                    std::vector<std::size_t>* sizes = nullptr) {
  std::size_t rank = 0;
  const auto e = components_detail::spatial_grid(mask.shape(), rank);
  labels.assign(mask.numel(), 0);
  if (sizes) sizes->clear();
  std::vector<std::size_t> stack;
  std::uint32_t next = 0;
  const auto dz_max = static_cast<std::ptrdiff_t>(rank == 3 ? 1 : 0);
  for (std::size_t seed = 0; seed < mask.numel(); ++seed) {
    if (mask[seed] > 1) throw DataError("components: mask must be binary");
    if (!mask[seed] || labels[seed]) continue;
    ++next;
    std::size_t size = 0;
    labels[seed] = next;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++size;
      const auto z = static_cast<std::ptrdiff_t>(i / (e[1] * e[2])), y = static_cast<std::ptrdiff_t>((i / e[2]) % e[1]),
                 x = static_cast<std::ptrdiff_t>(i % e[2]);
      for (std::ptrdiff_t dz = -dz_max; dz <= dz_max; ++dz)
        for (std::ptrdiff_t dy = -1; dy <= 1; ++dy)
          for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
            const std::ptrdiff_t nz = z + dz, ny = y + dy, nx = x + dx;
            if (nz < 0 || ny < 0 || nx < 0 || nz >= static_cast<std::ptrdiff_t>(e[0]) ||
                ny >= static_cast<std::ptrdiff_t>(e[1]) || nx >= static_cast<std::ptrdiff_t>(e[2]))
              continue;
            const std::size_t j = (static_cast<std::size_t>(nz) * e[1] + static_cast<std::size_t>(ny)) * e[2] +
                                  static_cast<std::size_t>(nx);
            if (mask[j] && !labels[j]) {
              labels[j] = next;
              stack.push_back(j);
            }
          }
    }
    if (sizes) sizes->push_back(size);
  }
  return next;
}

inline constexpr std::size_t kMinComponentSize = 40;

/// Drops every connected component with fewer than `min_size` voxels.
inline Mask remove_small_components(const Mask& mask, std::size_t min_size = kMinComponentSize) {
  std::vector<std::uint32_t> labels;
  std::vector<std::size_t> sizes;
  label_components(mask, labels, &sizes);
  Mask out(mask.shape(), 0);
  for (std::size_t i = 0; i < mask.numel(); ++i)
    if (labels[i] && sizes[labels[i] - 1] >= min_size) out[i] = 1;
  return out;
}

}  // namespace pcnet::eval
