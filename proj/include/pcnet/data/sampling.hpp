#pragma once

#include <random>

#include "pcnet/data/image.hpp"

namespace pcnet::data {

struct PatchOrigin {
  std::string source;
  std::vector<std::size_t> corner;  // per spatial axis
};

struct Sample {
  Tensor<float> patch;  // [1, P...]
  Mask label;           // [1, P...]
  PatchOrigin origin;
};

struct SampleSet {
  std::vector<std::size_t> patch_extent;  // per spatial axis
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  void append(SampleSet&& other) {
    if (patch_extent.empty()) patch_extent = other.patch_extent;
    for (auto& s : other.samples) samples.push_back(std::move(s));
  }
};

namespace sampling_detail {

inline void require_fits(const ImageRecord& r, std::size_t rank, std::size_t patch) {
  if (r.spatial_rank() != rank)
    throw DataError("record '" + r.id + "' has " + std::to_string(r.spatial_rank()) + " spatial axes, expected " +
                    std::to_string(rank));
  if (!r.mask) throw DataError("record '" + r.id + "' has no mask");
  for (auto e : r.extents())
    if (e < patch)
      throw DataError("record '" + r.id + "' extent " + std::to_string(e) + " is smaller than patch " +
                      std::to_string(patch));
}

/// Copies the box at `corner` (spatial coords) out of an [1, S...] tensor.
template <Element T>
Tensor<T> crop(const Tensor<T>& src, const std::vector<std::size_t>& corner, std::size_t patch) {
  const std::size_t rank = src.rank() - 1;
  std::array<std::size_t, 3> e{1, 1, 1}, c{0, 0, 0}, p{1, 1, 1};
  for (std::size_t a = 0; a < rank; ++a) {
    e[3 - rank + a] = src.shape()[a + 1];
    c[3 - rank + a] = corner[a];
    p[3 - rank + a] = patch;
  }
  std::vector<std::size_t> dims{1};
  for (std::size_t a = 0; a < rank; ++a) dims.push_back(patch);
  Tensor<T> out{Shape(dims)};
  T* dst = out.raw();
  for (std::size_t d = 0; d < p[0]; ++d)
    for (std::size_t h = 0; h < p[1]; ++h) {
      const T* row = src.raw() + ((c[0] + d) * e[1] + c[1] + h) * e[2] + c[2];
      dst = std::copy_n(row, p[2], dst);
    }
  return out;
}

inline Sample take(const ImageRecord& r, std::vector<std::size_t> corner, std::size_t patch) {
  return {crop(r.pixels, corner, patch), crop(*r.mask, corner, patch), {r.id, std::move(corner)}};
}

inline std::mt19937_64 scan_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace sampling_detail

/// Uniformly random 2D patches: a record, then an in-bounds corner, per draw.
inline SampleSet sample_patches_2d(const std::vector<ImageRecord>& records, std::size_t count,
                                   std::size_t patch = 48, std::uint64_t seed = 0) {
  if (records.empty()) throw DataError("sample_patches_2d: no records");
  for (const auto& r : records) sampling_detail::require_fits(r, 2, patch);
  SampleSet out{{patch, patch}, {}};
  out.samples.reserve(count);
  std::mt19937_64 rng(seed);
  using Dist = std::uniform_int_distribution<std::size_t>;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& r = records[Dist(0, records.size() - 1)(rng)];
    const auto e = r.extents();
    std::vector<std::size_t> corner{Dist(0, e[0] - patch)(rng), Dist(0, e[1] - patch)(rng)};
    out.samples.push_back(sampling_detail::take(r, std::move(corner), patch));
  }
  return out;
}

struct StratifiedCounts {
  std::size_t vessel = 105;
  std::size_t background = 17;
};

/// Vessel and background patches from one 3D scan. Vessel patches are
/// centered on uniformly drawn foreground voxels with the corner clamped
/// in-bounds; background patches are drawn uniformly among corners whose box
/// holds no foreground. The stream depends only on (seed, scan_index).
inline SampleSet sample_scan_3d(const ImageRecord& r, std::size_t scan_index, const StratifiedCounts& counts = {},
                                std::size_t patch = 48, std::uint64_t seed = 0) {
  sampling_detail::require_fits(r, 3, patch);
  const auto e = r.extents();
  const auto& m = *r.mask;
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < m.numel(); ++i)
    if (m[i]) fg.push_back(i);
  if (fg.empty() && counts.vessel > 0)
    throw DataError("sample_patches_3d: scan '" + r.id + "' has no foreground voxels");

  // Summed-volume table with a zero border: S[d+1][h+1][w+1] = sum over [0..d]x[0..h]x[0..w].
  const std::size_t D = e[0], H = e[1], W = e[2];
  std::vector<std::uint32_t> sat((D + 1) * (H + 1) * (W + 1), 0);
  auto S = [&](std::size_t d, std::size_t h, std::size_t w) -> std::uint32_t& {
    return sat[(d * (H + 1) + h) * (W + 1) + w];
  };
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        S(d + 1, h + 1, w + 1) = m[(d * H + h) * W + w] + S(d, h + 1, w + 1) + S(d + 1, h, w + 1) +
                                 S(d + 1, h + 1, w) - S(d, h, w + 1) - S(d, h + 1, w) - S(d + 1, h, w) + S(d, h, w);
  auto box_sum = [&](std::size_t d, std::size_t h, std::size_t w) {
    const std::size_t d1 = d + patch, h1 = h + patch, w1 = w + patch;
    return static_cast<std::int64_t>(S(d1, h1, w1)) - S(d, h1, w1) - S(d1, h, w1) - S(d1, h1, w) + S(d, h, w1) +
           S(d, h1, w) + S(d1, h, w) - static_cast<std::int64_t>(S(d, h, w));
  };
  std::vector<std::array<std::size_t, 3>> empty_corners;
  if (counts.background > 0)
    for (std::size_t d = 0; d + patch <= D; ++d)
      for (std::size_t h = 0; h + patch <= H; ++h)
        for (std::size_t w = 0; w + patch <= W; ++w)
          if (box_sum(d, h, w) == 0) empty_corners.push_back({d, h, w});
  if (counts.background > 0 && empty_corners.empty())
    throw DataError("sample_patches_3d: scan '" + r.id + "' has no foreground-free " + std::to_string(patch) +
                    "^3 box");

  SampleSet out{{patch, patch, patch}, {}};
  out.samples.reserve(counts.vessel + counts.background);
  auto rng = sampling_detail::scan_rng(seed, scan_index);
  using Dist = std::uniform_int_distribution<std::size_t>;
  const std::size_t half = patch / 2;
  auto clamp_corner = [&](std::size_t center, std::size_t len) {
    return std::min(center > half ? center - half : 0, len - patch);
  };
  for (std::size_t i = 0; i < counts.vessel; ++i) {
    const std::size_t v = fg[Dist(0, fg.size() - 1)(rng)];
    const std::size_t w = v % W, h = (v / W) % H, d = v / (W * H);
    out.samples.push_back(
        sampling_detail::take(r, {clamp_corner(d, D), clamp_corner(h, H), clamp_corner(w, W)}, patch));
  }
  for (std::size_t i = 0; i < counts.background; ++i) {
    const auto& c = empty_corners[Dist(0, empty_corners.size() - 1)(rng)];
    out.samples.push_back(sampling_detail::take(r, {c[0], c[1], c[2]}, patch));
  }
  return out;
}

/// Stratified sampling over all scans, in record order.
inline SampleSet sample_patches_3d(const std::vector<ImageRecord>& records, const StratifiedCounts& counts = {},
                                   std::size_t patch = 48, std::uint64_t seed = 0) {
  if (records.empty()) throw DataError("sample_patches_3d: no records");
  SampleSet out{{patch, patch, patch}, {}};
  for (std::size_t i = 0; i < records.size(); ++i) out.append(sample_scan_3d(records[i], i, counts, patch, seed));
  return out;
}

/// Stacks the selected samples into a batch [B, 1, P...] and its mask.
template <Real T>
std::pair<Tensor<T>, Tensor<T>> make_batch(const SampleSet& set, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DataError("make_batch: empty selection");
  std::vector<std::size_t> dims{indices.size(), 1};
  dims.insert(dims.end(), set.patch_extent.begin(), set.patch_extent.end());
  Tensor<T> x{Shape(dims)}, y{Shape(dims)};
  const std::size_t n = x.numel() / indices.size();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& s = set.samples.at(indices[k]);
    if (s.patch.numel() != n) throw ShapeError("make_batch: sample " + std::to_string(indices[k]) + " has wrong size");
    std::transform(s.patch.raw(), s.patch.raw() + n, x.raw() + k * n, [](float v) { return static_cast<T>(v); });
    std::transform(s.label.raw(), s.label.raw() + n, y.raw() + k * n, [](std::uint8_t v) { return static_cast<T>(v); });
  }
  return {std::move(x), std::move(y)};
}

}  // namespace pcnet::data
