#pragma once

#include <array>
#include <random>

#include "pcnet/data/image.hpp"

namespace pcnet::data {

enum class AugmentOp { kIdentity, kRot90, kRot180, kRot270, kFlipH, kFlipV };

inline constexpr std::array<AugmentOp, 6> kAugmentOps{AugmentOp::kIdentity, AugmentOp::kRot90,  AugmentOp::kRot180,
                                                      AugmentOp::kRot270,   AugmentOp::kFlipH, AugmentOp::kFlipV};

/// Applies a rotation (counter-clockwise) or flip to the last two axes of a
/// tensor [..., H, W]. Quarter turns swap H and W.
template <Element T>
Tensor<T> apply_augment(const Tensor<T>& t, AugmentOp op) {
  const auto& s = t.shape();
  if (s.rank() < 2) throw ShapeError("augment: need at least two axes, got " + s.str());
  const std::size_t H = s[s.rank() - 2], W = s[s.rank() - 1], plane = H * W, planes = t.numel() / plane;
  Shape os = s;
  if (op == AugmentOp::kRot90 || op == AugmentOp::kRot270) std::swap(os[os.rank() - 2], os[os.rank() - 1]);
  Tensor<T> out(os);
  const std::size_t OW = os[os.rank() - 1];
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = t.raw() + p * plane;
    T* dst = out.raw() + p * plane;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        std::size_t oy = y, ox = x;
        switch (op) {
          case AugmentOp::kIdentity: break;
          case AugmentOp::kRot90: oy = W - 1 - x; ox = y; break;
          case AugmentOp::kRot180: oy = H - 1 - y; ox = W - 1 - x; break;
          case AugmentOp::kRot270: oy = x; ox = H - 1 - y; break;
          case AugmentOp::kFlipH: ox = W - 1 - x; break;
          case AugmentOp::kFlipV: oy = H - 1 - y; break;
        }
        dst[oy * OW + ox] = src[y * W + x];
      }
  }
  return out;
}

inline ImageRecord apply_augment(const ImageRecord& r, AugmentOp op) {
  if (r.spatial_rank() != 2) throw DataError("augment: record '" + r.id + "' is not 2D");
  ImageRecord out = r;
  out.pixels = apply_augment(r.pixels, op);
  if (r.mask) out.mask = apply_augment(*r.mask, op);
  if (op == AugmentOp::kRot90 || op == AugmentOp::kRot270)
    if (out.spacing.size() == 2) std::swap(out.spacing[0], out.spacing[1]);
  return out;
}

inline AugmentOp draw_augment(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return kAugmentOps[std::uniform_int_distribution<std::size_t>(0, kAugmentOps.size() - 1)(rng)];
}

/// Random rotation or flip, identical for pixels and mask.
inline ImageRecord augment(const ImageRecord& r, std::uint64_t seed) { return apply_augment(r, draw_augment(seed)); }

}  // namespace pcnet::data
