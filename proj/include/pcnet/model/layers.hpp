#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pcnet/engine.hpp"

namespace pcnet::model {

/// Owns every parameter and batch-norm buffer of a model. Addresses are
/// stable for the store's lifetime, so layers keep raw pointers.
template <Real T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

  /// Kaiming-normal weights: N(0, 2 / fan_in).
  Param<T>* kaiming(std::string name, Shape shape, std::size_t fan_in) {
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    Tensor<T> v(std::move(shape));
    for (auto& x : v.data()) x = static_cast<T>(nd(rng_));
    return add(std::move(name), std::move(v));
  }
  Param<T>* constant(std::string name, Shape shape, T value) {
    return add(std::move(name), Tensor<T>::full(std::move(shape), value));
  }
  BatchNormStats<T>* stats(std::string name, std::size_t channels) {
    stats_.push_back({std::move(name), std::make_unique<BatchNormStats<T>>(channels)});
    return stats_.back().second.get();
  }

  std::vector<Param<T>*> params() const {
    std::vector<Param<T>*> out;
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }
  const std::vector<std::pair<std::string, std::unique_ptr<BatchNormStats<T>>>>& buffers() const { return stats_; }

  Param<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

 private:
  Param<T>* add(std::string name, Tensor<T> value) {
    params_.push_back(std::make_unique<Param<T>>(Param<T>{std::move(name), std::move(value), {}}));
    return params_.back().get();
  }

  std::mt19937_64 rng_;
  std::vector<std::unique_ptr<Param<T>>> params_;
  std::vector<std::pair<std::string, std::unique_ptr<BatchNormStats<T>>>> stats_;
};

/// Per-pass state threaded through layer forwards.
template <Real T>
struct Context {
  Tape<T>& tape;
  BnMode mode = BnMode::kTrain;
};

inline Shape kernel_shape(std::size_t c_out, std::size_t c_in, std::size_t k, std::size_t rank) {
  std::vector<std::size_t> dims{c_out, c_in};
  for (std::size_t i = 0; i < rank; ++i) dims.push_back(k);
  return Shape(dims);
}

template <Real T>
struct Conv {
  Param<T>* weight = nullptr;
  Param<T>* bias = nullptr;
  std::size_t padding = 0;

  Conv() = default;
  Conv(ParamStore<T>& store, const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t k,
       std::size_t rank, std::size_t pad)
      : padding(pad) {
    std::size_t fan_in = c_in;
    for (std::size_t i = 0; i < rank; ++i) fan_in *= k;
    weight = store.kaiming(name + ".weight", kernel_shape(c_out, c_in, k, rank), fan_in);
    bias = store.constant(name + ".bias", Shape{c_out}, T{0});
  }

  Var operator()(Context<T>& ctx, Var x) const {
    return convolve(ctx.tape, x, ctx.tape.param(*weight), ctx.tape.param(*bias), ConvOptions{{1}, {padding}});
  }
};

template <Real T>
struct BatchNorm {
  Param<T>* gamma = nullptr;
  Param<T>* beta = nullptr;
  BatchNormStats<T>* stats = nullptr;

  BatchNorm() = default;
  BatchNorm(ParamStore<T>& store, const std::string& name, std::size_t channels)
      : gamma(store.constant(name + ".gamma", Shape{channels}, T{1})),
        beta(store.constant(name + ".beta", Shape{channels}, T{0})),
        stats(store.stats(name, channels)) {}

  Var operator()(Context<T>& ctx, Var x) const {
    return batch_norm(ctx.tape, x, ctx.tape.param(*gamma), ctx.tape.param(*beta), *stats, ctx.mode);
  }
};

/// Squeeze-and-excitation: global pool, C -> C/r -> C bottleneck, sigmoid
/// gate applied per channel.
template <Real T>
struct SeBlock {
  Conv<T> squeeze, excite;

  SeBlock() = default;
  SeBlock(ParamStore<T>& store, const std::string& name, std::size_t channels, std::size_t rank,
          std::size_t reduction = 4) {
    if (reduction == 0 || channels % reduction != 0)
      throw ShapeError("se_block: channels " + std::to_string(channels) + " not divisible by reduction " +
                       std::to_string(reduction));
    squeeze = Conv<T>(store, name + ".squeeze", channels, channels / reduction, 1, rank, 0);
    excite = Conv<T>(store, name + ".excite", channels / reduction, channels, 1, rank, 0);
  }

  Var operator()(Context<T>& ctx, Var x) const {
    auto& t = ctx.tape;
    auto pooled = adaptive_avg_pool(t, x, {1});
    auto w = sigmoid(t, excite(ctx, relu(t, squeeze(ctx, pooled))));
    return channel_scale(t, x, w);
  }
};

/// Pyramid squeeze-and-excitation. Each branch pools the input to a b^rank
/// grid (b = 1, 2, 3), collapses it with a b-sized C -> C convolution and a
/// sigmoid into channel weights, and rescales the original input. The three
/// rescaled copies are fused by a 3x3 convolution (3C -> C) and batch norm.
template <Real T>
struct PseBlock {
  static constexpr std::size_t kLevels = 3;
  std::array<Conv<T>, kLevels> branch;
  Conv<T> fuse;
  BatchNorm<T> norm;

  PseBlock() = default;
  PseBlock(ParamStore<T>& store, const std::string& name, std::size_t channels, std::size_t rank) {
    for (std::size_t b = 0; b < kLevels; ++b)
      branch[b] = Conv<T>(store, name + ".branch" + std::to_string(b + 1), channels, channels, b + 1, rank, 0);
    fuse = Conv<T>(store, name + ".fuse", kLevels * channels, channels, 3, rank, 1);
    norm = BatchNorm<T>(store, name + ".bn", channels);
  }

  /// Channel weights [N, C, 1...] of pyramid level b (1-based).
  Var gate(Context<T>& ctx, Var x, std::size_t b) const {
    return sigmoid(ctx.tape, branch[b - 1](ctx, adaptive_avg_pool(ctx.tape, x, {b})));
  }

  Var operator()(Context<T>& ctx, Var x) const {
    const auto& s = ctx.tape.shape(x);
    for (std::size_t a = 2; a < s.rank(); ++a)
      if (s[a] < kLevels)
        throw ShapeError("pse_block: spatial extent " + std::to_string(s[a]) + " on axis " + std::to_string(a) +
                         " is below 3");
    std::vector<Var> copies;
    for (std::size_t b = 1; b <= kLevels; ++b) copies.push_back(channel_scale(ctx.tape, x, gate(ctx, x, b)));
    return norm(ctx, fuse(ctx, concat(ctx.tape, copies)));
  }
};

enum class Attention { kNone, kSe, kPse };

/// conv3 -> BN -> relu, twice, optionally followed by an attention block.
template <Real T>
struct ConvBlock {
  Conv<T> conv1, conv2;
  BatchNorm<T> bn1, bn2;
  Attention attention = Attention::kNone;
  SeBlock<T> se;
  PseBlock<T> pse;

  ConvBlock() = default;
  ConvBlock(ParamStore<T>& store, const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t rank,
            Attention att)
      : conv1(store, name + ".conv1", c_in, c_out, 3, rank, 1),
        conv2(store, name + ".conv2", c_out, c_out, 3, rank, 1),
        bn1(store, name + ".bn1", c_out),
        bn2(store, name + ".bn2", c_out),
        attention(att) {
    if (att == Attention::kSe) se = SeBlock<T>(store, name + ".se", c_out, rank);
    if (att == Attention::kPse) pse = PseBlock<T>(store, name + ".pse", c_out, rank);
  }

  Var operator()(Context<T>& ctx, Var x) const {
    auto& t = ctx.tape;
    auto h = relu(t, bn1(ctx, conv1(ctx, x)));
    h = relu(t, bn2(ctx, conv2(ctx, h)));
    switch (attention) {
      case Attention::kSe: return se(ctx, h);
      case Attention::kPse: return pse(ctx, h);
      case Attention::kNone: break;
    }
    return h;
  }
};

/// Intermediate values of one coarse-to-fine decoder stage.
struct CfTrace {
  Var expanded;      // up-sampled deeper features
  Var reduced;       // expanded features mapped to the encoder width
  Var residual;      // encoder - reduced
  Var conventional;  // plain U-Net decoder path
  Var output;
};

/// Coarse-to-fine decoder stage. The residual between encoder features and
/// the width-reduced expansion is concatenated with the conventional decoder
/// output and convolved again.
template <Real T>
struct CfStage {
  Conv<T> reduce;
  BatchNorm<T> reduce_bn;
  ConvBlock<T> conventional, refine;

  CfStage() = default;
  CfStage(ParamStore<T>& store, const std::string& name, std::size_t c_enc, std::size_t c_deep, std::size_t rank,
          Attention att)
      : reduce(store, name + ".reduce", c_deep, c_enc, 3, rank, 1),
        reduce_bn(store, name + ".reduce_bn", c_enc),
        conventional(store, name + ".decode", c_enc + c_deep, c_enc, rank, Attention::kNone),
        refine(store, name + ".refine", 2 * c_enc, c_enc, rank, att) {}

  CfTrace trace(Context<T>& ctx, Var encoder, Var deeper) const {
    auto& t = ctx.tape;
    const auto &es = t.shape(encoder), &ds = t.shape(deeper);
    if (es.rank() != ds.rank() || es[0] != ds[0]) throw ShapeError("cf_stage: encoder/deeper layout mismatch");
    for (std::size_t a = 2; a < es.rank(); ++a)
      if (es[a] != 2 * ds[a])
        throw ShapeError("cf_stage: encoder extent " + std::to_string(es[a]) + " on axis " + std::to_string(a) +
                         " is not twice the deeper extent " + std::to_string(ds[a]));
    CfTrace r;
    r.expanded = upsample_linear(t, deeper, 2);
    r.reduced = reduce_bn(ctx, reduce(ctx, r.expanded));
    r.residual = subtract(t, encoder, r.reduced);
    r.conventional = conventional(ctx, concat(t, {encoder, r.expanded}));
    r.output = refine(ctx, concat(t, {r.residual, r.conventional}));
    return r;
  }

  Var operator()(Context<T>& ctx, Var encoder, Var deeper) const { return trace(ctx, encoder, deeper).output; }
};

/// Plain U-Net decoder stage: block(concat(skip, upsample(deeper))).
template <Real T>
struct UpStage {
  ConvBlock<T> block;

  UpStage() = default;
  UpStage(ParamStore<T>& store, const std::string& name, std::size_t c_enc, std::size_t c_deep, std::size_t rank,
          Attention att)
      : block(store, name + ".decode", c_enc + c_deep, c_enc, rank, att) {}

  Var operator()(Context<T>& ctx, Var encoder, Var deeper) const {
    return block(ctx, concat(ctx.tape, {encoder, upsample_linear(ctx.tape, deeper, 2)}));
  }
};

}  // namespace pcnet::model
