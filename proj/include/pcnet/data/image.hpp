#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pcnet/engine/pctn_io.hpp"

namespace pcnet::data {

using Mask = Tensor<std::uint8_t>;

/// Default voxel spacing in [D, H, W] order (mm): 0.80 mm slices with
/// 0.586 mm in-plane resolution.
inline const std::vector<double> kCtaSpacing{0.80, 0.586, 0.586};

/// One image or volume: pixels [1, H, W] or [1, D, H, W] and an optional
/// binary mask of the same shape.
struct ImageRecord {
  std::string id;
  Tensor<float> pixels;
  std::optional<Mask> mask;
  std::vector<double> spacing;  // per spatial axis, mm
  std::string modality;

  std::size_t spatial_rank() const { return pixels.rank() - 1; }
  std::vector<std::size_t> extents() const {
    const auto& d = pixels.shape().dims();
    return {d.begin() + 1, d.end()};
  }

  void validate() const {
    const auto& s = pixels.shape();
    if (s.rank() < 3 || s.rank() > 4 || s[0] != 1)
      throw DataError("record '" + id + "': pixels must be [1, H, W] or [1, D, H, W], got " + s.str());
    for (float v : pixels.data())
      if (!(v >= 0.0f && v <= 1.0f)) throw DataError("record '" + id + "': pixel values must lie in [0, 1]");
    if (mask) {
      if (mask->shape() != s)
        throw DataError("record '" + id + "': mask shape " + mask->shape().str() + " differs from pixels " + s.str());
      for (auto v : mask->data())
        if (v > 1) throw DataError("record '" + id + "': mask must be binary");
    }
  }

  std::size_t foreground_count() const {
    std::size_t n = 0;
    if (mask)
      for (auto v : mask->data()) n += v;
    return n;
  }
};

/// One line per record: id <TAB> pixels path <TAB> mask path (may be empty).
struct ManifestEntry {
  std::string id;
  std::filesystem::path pixels;
  std::filesystem::path mask;
};

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    for (std::string col; std::getline(ls, col, '\t');) cols.push_back(col);
    if (cols.size() < 2 || cols.size() > 3)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 2 or 3 tab-separated fields");
    const auto base = path.parent_path();
    ManifestEntry e{cols[0], base / cols[1], cols.size() == 3 && !cols[2].empty() ? base / cols[2] : ""};
    out.push_back(std::move(e));
  }
  return out;
}

/// Writes paths relative to the manifest's directory.
inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  for (const auto& e : entries) os << e.id << '\t' << e.pixels.string() << '\t' << e.mask.string() << '\n';
}

inline ImageRecord load_record(const ManifestEntry& e) {
  ImageRecord r;
  r.id = e.id;
  r.pixels = io::load_as<float>(e.pixels);
  if (!e.mask.empty()) r.mask = io::load_as<std::uint8_t>(e.mask);
  r.validate();
  return r;
}

inline std::vector<ImageRecord> load_dataset(const std::filesystem::path& manifest) {
  std::vector<ImageRecord> out;
  for (const auto& e : read_manifest(manifest)) out.push_back(load_record(e));
  return out;
}

/// Binary PGM (P5, maxval 255) as [1, H, W] in [0, 1].
inline Tensor<float> read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open PGM: " + path.string());
  auto token = [&]() {
    std::string tok;
    char c;
    while (is.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(is, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  if (token() != "P5") throw DataError(path.string() + ": not a binary PGM (P5)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::logic_error&) {
    throw DataError(path.string() + ": malformed PGM header");
  }
  if (maxval != 255) throw DataError(path.string() + ": only maxval 255 is supported");
  std::vector<unsigned char> raw(w * h);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw DataError(path.string() + ": truncated PGM payload");
  Tensor<float> out(Shape{1, h, w});
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>(raw[i]) / 255.0f;
  return out;
}

inline void write_pgm(const std::filesystem::path& path, const Tensor<float>& image) {
  const auto& s = image.shape();
  if (s.rank() != 3 || s[0] != 1) throw ShapeError("write_pgm: expected [1, H, W]");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os << "P5\n" << s[2] << ' ' << s[1] << "\n255\n";
  for (float v : image.data()) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
  }
}

}  // namespace pcnet::data
