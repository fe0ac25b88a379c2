#pragma once

#include <array>
#include <string>
#include <vector>

#include "pcnet/engine/tensor.hpp"

namespace pcnet::detail {

/// Spatial extents of an [N, C, spatial...] tensor lifted to three axes;
/// lower ranks are padded with leading extent-1 axes so every kernel can loop
/// over (d, h, w).
struct Grid3 {
  std::array<std::size_t, 3> e{1, 1, 1};
  std::size_t numel() const { return e[0] * e[1] * e[2]; }
};

inline void require_nc_layout(const Shape& s, const char* op) {
  if (s.rank() < 3 || s.rank() > 5)
    throw ShapeError(std::string(op) + ": expected [N, C, spatial...] with 1-3 spatial axes, got " + s.str());
}

inline Grid3 grid_of(const Shape& s) {
  Grid3 g;
  const auto sp = s.spatial();
  const std::size_t off = 3 - sp.size();
  for (std::size_t i = 0; i < sp.size(); ++i) g.e[off + i] = sp[i];
  return g;
}

/// Lifts per-axis integer parameters given for `rank` spatial axes to three
/// axes, filling the leading ones with `fill`. A single value broadcasts.
inline std::array<std::size_t, 3> lift(const std::vector<std::size_t>& v, std::size_t rank, std::size_t fill,
                                       const char* what) {
  std::array<std::size_t, 3> out{fill, fill, fill};
  if (v.size() != 1 && v.size() != rank)
    throw ShapeError(std::string(what) + ": expected 1 or " + std::to_string(rank) + " values, got " +
                     std::to_string(v.size()));
  for (std::size_t i = 0; i < rank; ++i) out[3 - rank + i] = v.size() == 1 ? v[0] : v[i];
  return out;
}

inline Shape with_spatial(const Shape& s, std::size_t channels, const Grid3& g) {
  std::vector<std::size_t> dims{s[0], channels};
  const std::size_t rank = s.rank() - 2;
  for (std::size_t i = 3 - rank; i < 3; ++i) dims.push_back(g.e[i]);
  return Shape(dims);
}

inline const char* axis_name(std::size_t lifted_axis, std::size_t rank) {
  static const char* names2[] = {"", "H", "W"};
  static const char* names3[] = {"D", "H", "W"};
  if (rank == 3) return names3[lifted_axis];
  if (rank == 2) return names2[lifted_axis];
  return "L";
}

}  // namespace pcnet::detail
