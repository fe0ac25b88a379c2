#pragma once

#include <array>
#include <cmath>
#include <random>

#include "pcnet/data/image.hpp"

namespace pcnet::data {

struct SynthOptions {
  std::size_t rank = 2;
  std::vector<std::size_t> extent{128, 128};  // spatial extents, [H, W] or [D, H, W]
  std::size_t n_trees = 3;
  std::size_t n_branches = 12;  // per tree, trunk included
  double width_min = 1.0;       // vessel diameter range, px
  double width_max = 4.0;
  double noise_sigma = 0.1;
  // When positive, branches keep growing (round-robin over trees) until this
  // foreground fraction is reached; n_branches is then ignored.
  double target_fraction = 0.0;
  // Side of a cube kept free of vessels so that foreground-free patches of
  // that size exist (3D only, 0 disables).
  std::size_t clear_box = 0;
  std::uint64_t seed = 0;

  static SynthOptions volume(std::uint64_t seed = 0) {
    SynthOptions o;
    o.rank = 3;
    o.extent = {64, 128, 128};
    o.n_trees = 2;
    o.target_fraction = 0.0043;
    o.clear_box = 48;
    o.seed = seed;
    return o;
  }
};

inline constexpr float kVesselFloor = 0.6f;
inline constexpr float kBackgroundCeiling = 0.35f;

namespace synth_detail {

using Vec = std::array<double, 3>;

inline Vec add(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec sub(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec mul(const Vec& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

struct Node {
  Vec pos;
  double radius;
};

/// Rasterizes tapered capsules into a lifted [D, H, W] grid, tracking the
/// normalized depth (1 at the centerline, 0 at the wall) of marked voxels.
class Canvas {
 public:
  explicit Canvas(const std::array<std::size_t, 3>& e) : e_(e), mask_(e[0] * e[1] * e[2], 0), depth_(mask_.size(), 0.0f) {}

  void segment(const Node& a, const Node& b) {
    const Vec d = sub(b.pos, a.pos);
    const double len2 = dot(d, d);
    const double reach = std::max(a.radius, b.radius) + 1.0;
    std::array<std::size_t, 3> lo{}, hi{};
    for (std::size_t k = 0; k < 3; ++k) {
      const double mn = std::min(a.pos[k], b.pos[k]) - reach, mx = std::max(a.pos[k], b.pos[k]) + reach;
      lo[k] = static_cast<std::size_t>(std::clamp(std::floor(mn), 0.0, static_cast<double>(e_[k] - 1)));
      hi[k] = static_cast<std::size_t>(std::clamp(std::ceil(mx), 0.0, static_cast<double>(e_[k] - 1)));
    }
    auto mark = [&](std::size_t z, std::size_t y, std::size_t x) {
      const Vec v{static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)};
      const double t = len2 > 0 ? std::clamp(dot(sub(v, a.pos), d) / len2, 0.0, 1.0) : 0.0;
      const Vec diff = sub(v, add(a.pos, mul(d, t)));
      const double dist = std::sqrt(dot(diff, diff));
      const double r = a.radius + t * (b.radius - a.radius);
      return std::pair{dist <= r, static_cast<float>(std::max(0.0, 1.0 - dist / r))};
    };
    for (std::size_t z = lo[0]; z <= hi[0]; ++z)
      for (std::size_t y = lo[1]; y <= hi[1]; ++y)
        for (std::size_t x = lo[2]; x <= hi[2]; ++x)
          if (auto [inside, depth] = mark(z, y, x); inside) set(z, y, x, depth);
    // Centerline voxels at half-pixel steps keep thin tubes connected.
    const std::size_t steps = static_cast<std::size_t>(std::ceil(std::sqrt(len2) / 0.5));
    for (std::size_t s = 0; s <= steps; ++s) {
      const Vec p = add(a.pos, mul(d, steps ? static_cast<double>(s) / steps : 0.0));
      std::array<std::size_t, 3> q{};
      for (std::size_t k = 0; k < 3; ++k)
        q[k] = static_cast<std::size_t>(std::clamp(std::lround(p[k]), 0L, static_cast<long>(e_[k] - 1)));
      set(q[0], q[1], q[2], mark(q[0], q[1], q[2]).second);
    }
  }

  std::size_t foreground() const { return count_; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }
  const std::vector<float>& depth() const { return depth_; }

 private:
  void set(std::size_t z, std::size_t y, std::size_t x, float depth) {
    const std::size_t i = (z * e_[1] + y) * e_[2] + x;
    if (!mask_[i]) {
      mask_[i] = 1;
      ++count_;
    }
    depth_[i] = std::max(depth_[i], depth);
  }

  std::array<std::size_t, 3> e_;
  std::vector<std::uint8_t> mask_;
  std::vector<float> depth_;
  std::size_t count_ = 0;
};

}  // namespace synth_detail

/// Random branching tubular trees on a textured background. The mask is the
/// union of tapered capsules along random-walk polylines; vessel pixels get
/// intensity >= 0.6 and background <= 0.35 before Gaussian noise, so the
/// noiseless image thresholds back to the mask at 0.5.
inline ImageRecord synth_vessels(const SynthOptions& opt) {
  using namespace synth_detail;
  const std::size_t rank = opt.rank;
  if (rank != 2 && rank != 3) throw ConfigError("synth_vessels: rank must be 2 or 3");
  if (opt.extent.size() != rank) throw ConfigError("synth_vessels: extent needs one value per spatial axis");
  for (auto e : opt.extent)
    if (e < 64) throw ConfigError("synth_vessels: every extent must be at least 64");
  if (!(opt.width_min > 0 && opt.width_min <= opt.width_max)) throw ConfigError("synth_vessels: bad width range");
  if (opt.n_trees == 0) throw ConfigError("synth_vessels: need at least one tree");
  if (!(opt.noise_sigma >= 0)) throw ConfigError("synth_vessels: noise_sigma must be non-negative");

  std::array<std::size_t, 3> e{1, 1, 1};
  for (std::size_t a = 0; a < rank; ++a) e[3 - rank + a] = opt.extent[a];
  const std::size_t first_axis = 3 - rank;
  const std::size_t numel = e[0] * e[1] * e[2];

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double r_min = opt.width_min / 2, r_max = opt.width_max / 2, step = 2.0;

  // Vessel-free cube.
  std::array<double, 3> box_lo{}, box_hi{};
  const bool has_box = rank == 3 && opt.clear_box > 0;
  if (has_box)
    for (std::size_t k = 0; k < 3; ++k) {
      const std::size_t side = std::min(opt.clear_box, e[k]);
      const auto corner = std::uniform_int_distribution<std::size_t>(0, e[k] - side)(rng);
      box_lo[k] = static_cast<double>(corner);
      box_hi[k] = static_cast<double>(corner + side - 1);
    }
  auto box_distance = [&](const Vec& p) {
    double s = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double g = std::max({box_lo[k] - p[k], 0.0, p[k] - box_hi[k]});
      s += g * g;
    }
    return std::sqrt(s);
  };
  auto allowed = [&](const Vec& p, double r) {
    for (std::size_t k = first_axis; k < 3; ++k)
      if (p[k] < 0 || p[k] > static_cast<double>(e[k] - 1)) return false;
    return !has_box || box_distance(p) > r + 1.5 + step;
  };
  auto random_direction = [&]() {
    Vec d{0, 0, 0};
    for (std::size_t k = first_axis; k < 3; ++k) d[k] = gauss(rng);
    const double n = std::sqrt(dot(d, d));
    return n > 0 ? mul(d, 1.0 / n) : Vec{0, 0, 1};
  };

  Canvas canvas(e);
  std::vector<std::vector<Node>> trees(opt.n_trees);
  const double target = opt.target_fraction * static_cast<double>(numel);
  auto done = [&]() { return opt.target_fraction > 0 && static_cast<double>(canvas.foreground()) >= target; };

  // Grows one random-walk branch from `start`, tapering towards r_end.
  auto grow = [&](std::vector<Node>& tree, Node start, std::size_t n_steps, double r_end) {
    Vec dir = random_direction();
    Node cur = start;
    for (std::size_t s = 0; s < n_steps && !done(); ++s) {
      Vec jitter = random_direction();
      dir = add(dir, mul(jitter, 0.15));
      const double n = std::sqrt(dot(dir, dir));
      dir = mul(dir, 1.0 / n);
      const double r = start.radius + (r_end - start.radius) * (s + 1.0) / n_steps;
      Node next{add(cur.pos, mul(dir, step)), std::max(r_min, r)};
      if (!allowed(next.pos, next.radius)) break;
      canvas.segment(cur, next);
      tree.push_back(next);
      cur = next;
    }
  };

  const double span = static_cast<double>(*std::max_element(opt.extent.begin(), opt.extent.end()));
  for (auto& tree : trees) {
    Node root{};
    for (std::size_t attempt = 0;; ++attempt) {
      for (std::size_t k = first_axis; k < 3; ++k) root.pos[k] = unit(rng) * static_cast<double>(e[k] - 1);
      root.radius = r_max * (0.8 + 0.2 * unit(rng));
      if (allowed(root.pos, root.radius)) break;
      if (attempt > 10000) throw ConfigError("synth_vessels: no room for a tree root");
    }
    canvas.segment(root, root);
    tree.push_back(root);
    grow(tree, root, static_cast<std::size_t>(span / step * (0.4 + 0.3 * unit(rng))), r_min + 0.4 * (root.radius - r_min));
  }

  auto add_branch = [&](std::vector<Node>& tree) {
    const Node& fork = tree[std::uniform_int_distribution<std::size_t>(0, tree.size() - 1)(rng)];
    Node start{fork.pos, std::max(r_min, fork.radius * (0.6 + 0.3 * unit(rng)))};
    const auto n_steps = static_cast<std::size_t>(span / step * (0.1 + 0.25 * unit(rng)));
    grow(tree, start, std::max<std::size_t>(n_steps, 2), std::max(r_min, 0.6 * start.radius));
  };
  if (opt.target_fraction > 0) {
    for (std::size_t b = 0; !done(); ++b) {
      if (b > 100000) throw ConfigError("synth_vessels: target foreground fraction unreachable");
      add_branch(trees[b % trees.size()]);
    }
  } else {
    for (auto& tree : trees)
      for (std::size_t b = 1; b < opt.n_branches; ++b) add_branch(tree);
  }

  // Background texture: a few low-frequency plane waves around 0.25.
  std::array<Vec, 3> waves{};
  std::array<double, 3> phases{};
  for (std::size_t w = 0; w < 3; ++w) {
    waves[w] = mul(random_direction(), 2 * M_PI / (span * (0.3 + 0.7 * unit(rng))));
    phases[w] = 2 * M_PI * unit(rng);
  }

  std::vector<std::size_t> dims{1};
  dims.insert(dims.end(), opt.extent.begin(), opt.extent.end());
  ImageRecord r;
  r.id = "synth-" + std::to_string(rank) + "d-" + std::to_string(opt.seed);
  r.pixels = Tensor<float>(Shape(dims));
  r.mask = Mask(Shape(dims), 0);
  r.spacing = rank == 3 ? kCtaSpacing : std::vector<double>{1.0, 1.0};
  r.modality = "synthetic";
  const auto& m = canvas.mask();
  const auto& depth = canvas.depth();
  std::size_t i = 0;
  for (std::size_t z = 0; z < e[0]; ++z)
    for (std::size_t y = 0; y < e[1]; ++y)
      for (std::size_t x = 0; x < e[2]; ++x, ++i) {
        double v;
        if (m[i]) {
          v = kVesselFloor + 0.3 * depth[i];
        } else {
          const Vec p{static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)};
          double tex = 0;
          for (std::size_t w = 0; w < 3; ++w) tex += std::sin(dot(waves[w], p) + phases[w]);
          v = 0.25 + 0.1 / 3.0 * tex;
        }
        if (opt.noise_sigma > 0) v += opt.noise_sigma * gauss(rng);
        r.pixels[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        (*r.mask)[i] = m[i];
      }
  return r;
}

inline double foreground_fraction(const ImageRecord& r) {
  return r.mask ? static_cast<double>(r.foreground_count()) / static_cast<double>(r.mask->numel()) : 0.0;
}

}  // namespace pcnet::data
