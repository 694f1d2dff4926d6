#include "gfsr/tensor_io.hpp"

#include <bit>
#include <cstring>

#include <zlib.h>

#include "gfsr/error.hpp"
#include "gfsr/fileio.hpp"

namespace gfsr {

static_assert(std::endian::native == std::endian::little,
              "tensor container I/O assumes a little-endian host");

namespace {

constexpr std::string_view kMagic = "GFSRTNSR";

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <typename U>
U get(std::string_view bytes, std::size_t& offset) {
  if (offset + sizeof(U) > bytes.size()) fail_data("tensor: checksum error (truncated record)");
  U v;
  std::memcpy(&v, bytes.data() + offset, sizeof(U));
  offset += sizeof(U);
  return v;
}

}  // namespace

std::uint32_t crc32(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

template <typename T>
std::string encode_tensor(const Tensor<T>& t) {
  if (t.rank() > 255) fail_data("tensor: rank exceeds 255");
  std::string out(kMagic);
  put<std::uint8_t>(out, kTensorFormatVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_of<T>()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) put<std::uint64_t>(out, d);
  out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(T));
  put<std::uint32_t>(out, crc32(out));
  return out;
}

template <typename T>
Tensor<T> decode_tensor_at(std::string_view bytes, std::size_t& offset) {
  const std::size_t start = offset;
  if (bytes.size() < offset + kMagic.size() || bytes.substr(offset, kMagic.size()) != kMagic) {
    fail_data("tensor: bad magic");
  }
  offset += kMagic.size();
  const auto version = get<std::uint8_t>(bytes, offset);
  if (version != kTensorFormatVersion) {
    fail_data("tensor: version mismatch (file " + std::to_string(version) + ", expected " +
              std::to_string(kTensorFormatVersion) + ")");
  }
  const auto dtype = get<std::uint8_t>(bytes, offset);
  const auto rank = get<std::uint8_t>(bytes, offset);
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(bytes, offset));
  const std::size_t count = shape_size(shape);
  if (count > (std::size_t{1} << 34) / sizeof(T)) fail_data("tensor: implausible shape");
  const std::size_t payload = count * sizeof(T);
  if (offset + payload + sizeof(std::uint32_t) > bytes.size()) {
    fail_data("tensor: checksum error (truncated record)");
  }
  const std::size_t payload_at = offset;
  offset += payload;
  const auto stored = get<std::uint32_t>(bytes, offset);
  if (crc32(bytes.substr(start, offset - sizeof(std::uint32_t) - start)) != stored) {
    fail_data("tensor: checksum error");
  }
  if (dtype != static_cast<std::uint8_t>(dtype_of<T>())) {
    fail_data("tensor: dtype " + std::to_string(dtype) + " does not match requested type");
  }
  std::vector<T> data(count);
  std::memcpy(data.data(), bytes.data() + payload_at, payload);
  return Tensor<T>(std::move(shape), std::move(data));
}

#define GFSR_INSTANTIATE(T)                                     \
  template std::string encode_tensor<T>(const Tensor<T>&);      \
  template Tensor<T> decode_tensor_at<T>(std::string_view, std::size_t&);
GFSR_INSTANTIATE(float)
GFSR_INSTANTIATE(double)
GFSR_INSTANTIATE(std::int32_t)
GFSR_INSTANTIATE(std::uint8_t)
#undef GFSR_INSTANTIATE

void save_tensor_file(const Tensor<float>& t, const std::string& path) {
  write_file_atomic(path, encode_tensor(t));
}

Tensor<float> load_tensor_file(const std::string& path) {
  try {
    return decode_tensor<float>(read_file(path));
  } catch (const Error& e) {
    fail_data(path + ": " + e.what());
  }
}

}  // namespace gfsr
