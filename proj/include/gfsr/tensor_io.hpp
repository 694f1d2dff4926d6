#pragma once

// Binary tensor container, little-endian:
//   "GFSRTNSR" | version u8 | dtype u8 | rank u8 | rank x u64 dims |
//   row-major payload | CRC32 (u32) of all preceding bytes.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "gfsr/tensor.hpp"

namespace gfsr {

inline constexpr std::uint8_t kTensorFormatVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1, i32 = 2, u8 = 3 };

template <typename T>
constexpr DType dtype_of();
template <> constexpr DType dtype_of<float>() { return DType::f32; }
template <> constexpr DType dtype_of<double>() { return DType::f64; }
template <> constexpr DType dtype_of<std::int32_t>() { return DType::i32; }
template <> constexpr DType dtype_of<std::uint8_t>() { return DType::u8; }

std::uint32_t crc32(std::string_view bytes);

template <typename T>
std::string encode_tensor(const Tensor<T>& t);

// Decodes one record starting at `offset`; advances `offset` past it.
template <typename T>
Tensor<T> decode_tensor_at(std::string_view bytes, std::size_t& offset);

template <typename T>
Tensor<T> decode_tensor(std::string_view bytes) {
  std::size_t offset = 0;
  return decode_tensor_at<T>(bytes, offset);
}

void save_tensor_file(const Tensor<float>& t, const std::string& path);
Tensor<float> load_tensor_file(const std::string& path);

}  // namespace gfsr
