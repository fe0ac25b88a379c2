#pragma once

#include <functional>

#include "pcnet/model/network.hpp"

namespace pcnet::model {

struct StitchOptions {
  std::size_t patch = 48;
  std::size_t stride = 24;
  std::size_t batch = 16;
};

/// Maps a batch of patches [B, 1, patch...] to probabilities of the same shape.
template <Real T>
using PatchPredictor = std::function<Tensor<T>(const Tensor<T>&)>;

namespace stitch_detail {

/// Extent after padding so that a patch grid with the given stride covers it.
inline std::size_t covered_extent(std::size_t len, std::size_t patch, std::size_t stride) {
  if (len <= patch) return patch;
  const std::size_t steps = (len - patch + stride - 1) / stride;
  return patch + steps * stride;
}

inline std::size_t reflect(std::size_t i, std::size_t len) { return i < len ? i : 2 * (len - 1) - i; }

}  // namespace stitch_detail

/// Sliding-window inference over an image [1, S...] with 1-3 spatial axes.
/// The image is reflect-padded at the far border until the patch grid covers
/// it, overlapping predictions are averaged, and the result is cropped back.
/// When `weight_sums` is given it receives, per voxel, the total averaging
/// weight of all patches covering it.
template <Real T>
Tensor<T> stitch_predict(const Tensor<T>& image, const PatchPredictor<T>& predict, const StitchOptions& opt = {},
                         Tensor<T>* weight_sums = nullptr) {
  const Shape& s = image.shape();
  if (s.rank() < 2 || s.rank() > 4 || s[0] != 1) throw ShapeError("predict_full: image must be [1, spatial...]");
  if (opt.patch == 0 || opt.stride == 0 || opt.stride > opt.patch || opt.batch == 0)
    throw ConfigError("predict_full: need 0 < stride <= patch and a positive batch");
  const std::size_t rank = s.rank() - 1;
  detail::Grid3 in, padded;
  for (std::size_t a = 0; a < rank; ++a) {
    const std::size_t len = s[a + 1];
    const std::size_t target = stitch_detail::covered_extent(len, opt.patch, opt.stride);
    if (target - len > len - 1)
      throw ShapeError("predict_full: extent " + std::to_string(len) + " is too small to reflect-pad to one patch of " +
                       std::to_string(opt.patch));
    in.e[3 - rank + a] = len;
    padded.e[3 - rank + a] = target;
  }

  // Patch origins per lifted axis.
  std::array<std::vector<std::size_t>, 3> origins;
  for (std::size_t a = 0; a < 3; ++a) {
    if (a < 3 - rank) {
      origins[a] = {0};
      continue;
    }
    for (std::size_t o = 0; o + opt.patch <= padded.e[a]; o += opt.stride) origins[a].push_back(o);
  }
  std::array<std::size_t, 3> pe{1, 1, 1};
  for (std::size_t a = 3 - rank; a < 3; ++a) pe[a] = opt.patch;
  const std::size_t patch_numel = pe[0] * pe[1] * pe[2];

  std::vector<double> acc(padded.numel(), 0.0);
  std::vector<std::uint32_t> count(padded.numel(), 0);
  std::vector<std::array<std::size_t, 3>> corners;
  for (auto d : origins[0])
    for (auto h : origins[1])
      for (auto w : origins[2]) corners.push_back({d, h, w});

  auto padded_index = [&](std::size_t d, std::size_t h, std::size_t w) {
    return (d * padded.e[1] + h) * padded.e[2] + w;
  };
  auto source_value = [&](std::size_t d, std::size_t h, std::size_t w) {
    const std::size_t sd = stitch_detail::reflect(d, in.e[0]), sh = stitch_detail::reflect(h, in.e[1]),
                      sw = stitch_detail::reflect(w, in.e[2]);
    return image[(sd * in.e[1] + sh) * in.e[2] + sw];
  };

  std::vector<std::size_t> batch_dims{0, 1};
  for (std::size_t a = 3 - rank; a < 3; ++a) batch_dims.push_back(opt.patch);
  for (std::size_t start = 0; start < corners.size(); start += opt.batch) {
    const std::size_t b = std::min(opt.batch, corners.size() - start);
    batch_dims[0] = b;
    Tensor<T> batch{Shape(batch_dims)};
    for (std::size_t k = 0; k < b; ++k) {
      const auto& c = corners[start + k];
      T* dst = batch.raw() + k * patch_numel;
      for (std::size_t d = 0; d < pe[0]; ++d)
        for (std::size_t h = 0; h < pe[1]; ++h)
          for (std::size_t w = 0; w < pe[2]; ++w)
            *dst++ = source_value(c[0] + d, c[1] + h, c[2] + w);
    }
    const Tensor<T> probs = predict(batch);
    if (probs.shape() != batch.shape())
      throw ShapeError("predict_full: predictor returned " + probs.shape().str() + " for " + batch.shape().str());
    for (std::size_t k = 0; k < b; ++k) {
      const auto& c = corners[start + k];
      const T* src = probs.raw() + k * patch_numel;
      for (std::size_t d = 0; d < pe[0]; ++d)
        for (std::size_t h = 0; h < pe[1]; ++h)
          for (std::size_t w = 0; w < pe[2]; ++w) {
            const std::size_t i = padded_index(c[0] + d, c[1] + h, c[2] + w);
            acc[i] += *src++;
            ++count[i];
          }
    }
  }

  // Each covering patch contributes with weight 1 / count; re-walk the grid
  // to total those weights per voxel.
  std::vector<double> wsum;
  if (weight_sums) {
    wsum.assign(padded.numel(), 0.0);
    for (const auto& c : corners)
      for (std::size_t d = 0; d < pe[0]; ++d)
        for (std::size_t h = 0; h < pe[1]; ++h)
          for (std::size_t w = 0; w < pe[2]; ++w) {
            const std::size_t i = padded_index(c[0] + d, c[1] + h, c[2] + w);
            wsum[i] += 1.0 / count[i];
          }
    *weight_sums = Tensor<T>(s);
  }

  Tensor<T> out(s);
  std::size_t o = 0;
  for (std::size_t d = 0; d < in.e[0]; ++d)
    for (std::size_t h = 0; h < in.e[1]; ++h)
      for (std::size_t w = 0; w < in.e[2]; ++w, ++o) {
        const std::size_t i = padded_index(d, h, w);
        out[o] = static_cast<T>(acc[i] / count[i]);
        if (weight_sums) (*weight_sums)[o] = static_cast<T>(wsum[i]);
      }
  return out;
}

/// Predicts a full probability map with the model's main output head.
template <Real T>
Tensor<T> predict_full(const ModelGraph<T>& model, const Tensor<T>& image, const StitchOptions& opt = {}) {
  PatchPredictor<T> run = [&](const Tensor<T>& batch) {
    Tape<T> tape(TapeMode::kNoGrad);
    auto out = model.forward(tape, tape.constant(batch), BnMode::kEval);
    return tape.value(out.main);
  };
  return stitch_predict(image, run, opt);
}

}  // namespace pcnet::model
