#pragma once

#include "pcnet/model/network.hpp"

namespace pcnet::model {

struct ComplexityReport {
  std::size_t parameter_count = 0;
  std::uint64_t flops = 0;
};

/// Parameters plus the FLOPs of one forward pass of a single patch at
/// `ref_spatial` (48 per axis when empty). Convolutions count two per
/// multiply-accumulate; pooling, interpolation, normalization and pointwise
/// ops count per element touched.
template <Real T>
ComplexityReport count_complexity(const ModelGraph<T>& model, std::vector<std::size_t> ref_spatial = {}) {
  if (ref_spatial.empty()) ref_spatial.assign(model.spec().spatial_rank, 48);
  std::vector<std::size_t> dims{1, 1};
  dims.insert(dims.end(), ref_spatial.begin(), ref_spatial.end());
  Tape<T> tape(TapeMode::kTrace);
  model.forward(tape, tape.constant(Tensor<T>(Shape(dims))), BnMode::kEval);
  return {model.parameter_count(), tape.flops()};
}

}  // namespace pcnet::model
