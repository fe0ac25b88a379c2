#pragma once

// PCTN binary tensor container:
//   "PCTN" | version u16 LE | dtype u8 (0=f32, 1=f64, 2=u8) | rank u8 |
//   rank x extent u64 LE | raw little-endian element data

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <variant>

#include "pcnet/engine/tensor.hpp"

namespace pcnet::io {

inline constexpr std::array<char, 4> kMagic{'P', 'C', 'T', 'N'};
inline constexpr std::uint16_t kVersion = 1;

using AnyTensor = std::variant<Tensor<float>, Tensor<double>, Tensor<std::uint8_t>>;

namespace detail {

static_assert(std::endian::native == std::endian::little, "PCTN I/O assumes a little-endian host");

template <typename U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& is) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) throw DataError("PCTN: truncated stream");
  return v;
}

}  // namespace detail

template <Element T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write(kMagic.data(), kMagic.size());
  detail::put<std::uint16_t>(os, kVersion);
  detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(Tensor<T>::dtype()));
  detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape().dims()) detail::put<std::uint64_t>(os, d);
  os.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
  if (!os) throw DataError("PCTN: write failed");
}

inline AnyTensor read_any(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size())) throw DataError("PCTN: truncated stream");
  if (magic != kMagic) throw DataError("PCTN: bad magic bytes");
  auto version = detail::get<std::uint16_t>(is);
  if (version != kVersion) throw DataError("PCTN: unsupported version " + std::to_string(version));
  auto code = detail::get<std::uint8_t>(is);
  auto rank = detail::get<std::uint8_t>(is);
  if (rank == 0 || rank > Shape::kMaxRank) throw DataError("PCTN: invalid rank " + std::to_string(rank));
  std::vector<std::size_t> dims(rank);
  for (auto& d : dims) d = static_cast<std::size_t>(detail::get<std::uint64_t>(is));
  Shape shape(dims);

  auto read_body = [&]<Element T>(std::type_identity<T>) -> AnyTensor {
    Tensor<T> t(shape);
    if (!is.read(reinterpret_cast<char*>(t.raw()), static_cast<std::streamsize>(t.numel() * sizeof(T))))
      throw DataError("PCTN: truncated payload");
    return t;
  };
  switch (static_cast<DType>(code)) {
    case DType::kFloat32: return read_body(std::type_identity<float>{});
    case DType::kFloat64: return read_body(std::type_identity<double>{});
    case DType::kUInt8: return read_body(std::type_identity<std::uint8_t>{});
  }
  throw DataError("PCTN: unknown dtype code " + std::to_string(code));
}

/// Reads a tensor of exactly dtype T; other dtypes are a DTypeError.
template <Element T>
Tensor<T> read_tensor(std::istream& is) {
  auto any = read_any(is);
  if (auto* t = std::get_if<Tensor<T>>(&any)) return std::move(*t);
  throw DTypeError(std::string("PCTN: expected ") + dtype_name(dtype_of<T>()));
}

/// Reads any dtype and converts to T.
template <Element T>
Tensor<T> read_tensor_as(std::istream& is) {
  return std::visit([](auto&& t) { return t.template cast<T>(); }, read_any(is));
}

template <Element T>
void save(const std::filesystem::path& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  write_tensor(os, t);
}

template <Element T>
Tensor<T> load_as(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open for reading: " + path.string());
  try {
    return read_tensor_as<T>(is);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace pcnet::io
