#pragma once

#include <array>

#include "pcnet/model/network.hpp"

namespace pcnet::model {

/// Weights of the two auxiliary terms of the deep-supervised loss.
struct LossConfig {
  double lambda2 = 0.67;
  double lambda3 = 0.33;

  void validate() const {
    if (!(lambda2 >= 0.0 && lambda2 <= 1.0)) throw ConfigError("lambda2 must lie in [0, 1]");
    if (!(lambda3 >= 0.0 && lambda3 <= 1.0)) throw ConfigError("lambda3 must lie in [0, 1]");
  }
};

template <Real T>
using TargetPyramid = std::array<Tensor<T>, 3>;

/// Ground truth at full, 1/2 and 1/4 resolution; the coarser maps are the
/// 2x2 and 4x4 max-pools of the mask.
template <Real T>
TargetPyramid<T> multiscale_targets(const Tensor<T>& mask) {
  pcnet::detail::require_nc_layout(mask.shape(), "multiscale_targets");
  for (T v : mask.data())
    if (v != T{0} && v != T{1}) throw DataError("multiscale_targets: mask must be binary");
  for (std::size_t a = 2; a < mask.rank(); ++a)
    if (mask.shape()[a] % 4 != 0)
      throw ShapeError("multiscale_targets: extent " + std::to_string(mask.shape()[a]) + " on axis " +
                       std::to_string(a) + " is not divisible by 4");
  Tape<T> tape(TapeMode::kNoGrad);
  auto y = tape.constant(mask);
  auto ms2 = max_pool(tape, y, {2}, {2});
  auto ms3 = max_pool(tape, y, {4}, {4});
  return {mask, tape.value(ms2), tape.value(ms3)};
}

struct LossTerms {
  Var total, main, aux2, aux3;
};

/// bce(main) + lambda2 * bce(aux2) + lambda3 * bce(aux3).
template <Real T>
LossTerms total_loss(Tape<T>& tape, const Outputs& out, const TargetPyramid<T>& targets, const LossConfig& cfg) {
  cfg.validate();
  const std::array<Var, 3> preds{out.main, out.aux2, out.aux3};
  const char* names[] = {"main", "aux2", "aux3"};
  for (std::size_t k = 0; k < 3; ++k)
    if (tape.shape(preds[k]) != targets[k].shape())
      throw ShapeError(std::string("total_loss: ") + names[k] + " output " + tape.shape(preds[k]).str() +
                       " does not match target " + targets[k].shape().str());
  LossTerms t;
  t.main = bce_loss(tape, out.main, targets[0]);
  t.aux2 = bce_loss(tape, out.aux2, targets[1]);
  t.aux3 = bce_loss(tape, out.aux3, targets[2]);
  t.total = add(tape, add(tape, t.main, scale(tape, t.aux2, static_cast<T>(cfg.lambda2))),
                scale(tape, t.aux3, static_cast<T>(cfg.lambda3)));
  return t;
}

/// Loss weights a variant trains with: deep-supervision-free variants keep
/// only the main term.
inline LossConfig effective_loss(Variant v, LossConfig cfg) {
  if (!traits_of(v).deep_supervision) cfg.lambda2 = cfg.lambda3 = 0.0;
  return cfg;
}

}  // namespace pcnet::model
