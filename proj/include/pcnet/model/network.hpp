#pragma once

#include <array>
#include <string>
#include <string_view>

#include "pcnet/model/layers.hpp"

namespace pcnet::model {

/// Rows of the ablation ladder.
enum class Variant { kUNetNoDS, kUNet, kUNetSE, kUNetPSE, kUNetCF, kPCNet };

inline constexpr std::array<Variant, 6> kAllVariants{Variant::kUNetNoDS, Variant::kUNet,   Variant::kUNetSE,
                                                     Variant::kUNetPSE,  Variant::kUNetCF, Variant::kPCNet};

inline std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kUNetNoDS: return "UNetNoDS";
    case Variant::kUNet: return "UNet";
    case Variant::kUNetSE: return "UNetSE";
    case Variant::kUNetPSE: return "UNetPSE";
    case Variant::kUNetCF: return "UNetCF";
    case Variant::kPCNet: return "PCNet";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  for (auto v : kAllVariants)
    if (variant_name(v) == s) return v;
  throw ConfigError("unknown model variant '" + std::string(s) + "'");
}

struct VariantTraits {
  Attention attention = Attention::kNone;
  bool coarse_to_fine = false;
  bool deep_supervision = true;
};

inline VariantTraits traits_of(Variant v) {
  switch (v) {
    case Variant::kUNetNoDS: return {Attention::kNone, false, false};
    case Variant::kUNet: return {Attention::kNone, false, true};
    case Variant::kUNetSE: return {Attention::kSe, false, true};
    case Variant::kUNetPSE: return {Attention::kPse, false, true};
    case Variant::kUNetCF: return {Attention::kNone, true, true};
    case Variant::kPCNet: return {Attention::kPse, true, true};
  }
  return {};
}

struct ModelSpec {
  Variant variant = Variant::kPCNet;
  std::size_t spatial_rank = 2;
  std::size_t base_channels = 16;
  std::size_t levels = 3;  // pooling levels; 3 gives the 7-block layout
  std::uint64_t seed = 0;
};

/// Probability maps at full, 1/2 and 1/4 resolution.
struct Outputs {
  Var main, aux2, aux3;
};

/// One network of the ladder: `levels` encoder blocks, a bottleneck, and
/// `levels` decoder stages (plain or coarse-to-fine), with 1x1-conv sigmoid
/// heads on the decoder features at full, 1/2 and 1/4 resolution. Heads are
/// built for every variant; variants without deep supervision simply give
/// the auxiliary outputs zero loss weight.
template <Real T>
class ModelGraph {
 public:
  explicit ModelGraph(ModelSpec spec) : spec_(spec), store_(spec.seed) {
    if (spec.spatial_rank != 2 && spec.spatial_rank != 3) throw ConfigError("spatial_rank must be 2 or 3");
    if (spec.base_channels < 4 || spec.base_channels % 4 != 0)
      throw ConfigError("base_channels must be >= 4 and divisible by 4, got " + std::to_string(spec.base_channels));
    if (spec.levels < 2) throw ConfigError("levels must be >= 2");
    const auto tr = traits_of(spec.variant);
    const std::size_t r = spec.spatial_rank;

    std::size_t c_in = 1;
    for (std::size_t l = 0; l < spec.levels; ++l) {
      encoder_.emplace_back(store_, "enc" + std::to_string(l + 1), c_in, width(l), r, tr.attention);
      c_in = width(l);
    }
    bottleneck_ = ConvBlock<T>(store_, "bottleneck", c_in, width(spec.levels), r, tr.attention);
    for (std::size_t l = spec.levels; l-- > 0;) {
      const std::string name = "dec" + std::to_string(l + 1);
      if (tr.coarse_to_fine)
        cf_.emplace_back(store_, name, width(l), width(l + 1), r, tr.attention);
      else
        up_.emplace_back(store_, name, width(l), width(l + 1), r, tr.attention);
    }
    for (std::size_t k = 0; k < 3; ++k)
      heads_[k] = Conv<T>(store_, "head" + std::to_string(k + 1), width(k), 1, 1, r, 0);
  }

  const ModelSpec& spec() const { return spec_; }
  VariantTraits traits() const { return traits_of(spec_.variant); }
  std::size_t block_count() const { return 2 * spec_.levels + 1; }
  std::size_t width(std::size_t level) const { return spec_.base_channels << level; }

  std::vector<Param<T>*> parameters() const { return store_.params(); }
  ParamStore<T>& store() { return store_; }
  const ParamStore<T>& store() const { return store_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto* p : store_.params()) n += p->value.numel();
    return n;
  }

  /// Smallest accepted spatial extent and the divisibility it must satisfy.
  std::size_t min_extent() const {
    const std::size_t factor = std::size_t{1} << spec_.levels;
    return traits().attention == Attention::kPse ? 3 * factor : factor;
  }

  Outputs forward(Tape<T>& tape, Var input, BnMode mode = BnMode::kTrain) const {
    const Shape& s = tape.shape(input);
    if (s.rank() != spec_.spatial_rank + 2 || s[1] != 1)
      throw ShapeError("model input must be [N, 1, spatial...] with " + std::to_string(spec_.spatial_rank) +
                       " spatial axes, got " + s.str());
    const std::size_t factor = std::size_t{1} << spec_.levels;
    for (std::size_t a = 2; a < s.rank(); ++a)
      if (s[a] % factor != 0 || s[a] < min_extent())
        throw ShapeError("model input extent " + std::to_string(s[a]) + " on axis " + std::to_string(a) +
                         " must be a multiple of " + std::to_string(factor) + " and at least " +
                         std::to_string(min_extent()));
    Context<T> ctx{tape, mode};
    std::vector<Var> skips;
    Var h = input;
    for (const auto& block : encoder_) {
      skips.push_back(block(ctx, h));
      h = max_pool(tape, skips.back(), {2}, {2});
    }
    h = bottleneck_(ctx, h);
    // features[l] = decoder output at level l; features[levels] = bottleneck
    std::vector<Var> features(spec_.levels + 1);
    features[spec_.levels] = h;
    for (std::size_t i = 0; i < spec_.levels; ++i) {
      const std::size_t l = spec_.levels - 1 - i;
      h = traits().coarse_to_fine ? cf_[i](ctx, skips[l], h) : up_[i](ctx, skips[l], h);
      features[l] = h;
    }
    Outputs out;
    out.main = sigmoid(tape, heads_[0](ctx, features[0]));
    out.aux2 = sigmoid(tape, heads_[1](ctx, features[1]));
    out.aux3 = sigmoid(tape, heads_[2](ctx, features[2]));
    return out;
  }

 private:
  ModelSpec spec_;
  ParamStore<T> store_;
  std::vector<ConvBlock<T>> encoder_;
  ConvBlock<T> bottleneck_;
  std::vector<UpStage<T>> up_;  // ordered deepest first
  std::vector<CfStage<T>> cf_;  // ordered deepest first
  std::array<Conv<T>, 3> heads_;
};

template <Real T>
ModelGraph<T> build_model(Variant variant, std::size_t spatial_rank, std::size_t base_channels,
                          std::uint64_t seed = 0) {
  return ModelGraph<T>(ModelSpec{variant, spatial_rank, base_channels, 3, seed});
}

}  // namespace pcnet::model
