#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "gfsr/error.hpp"

namespace gfsr {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape);

// Dense row-major tensor. Values are owned; copies are deep.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      fail_data("tensor payload of " + std::to_string(data_.size()) +
                " values does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  // Number of values per leading-axis slice (per sample for batched data).
  std::size_t stride0() const { return rank() == 0 ? 1 : size() / shape_[0]; }

  std::span<T> slice0(std::size_t i) {
    return std::span<T>(data_).subspan(i * stride0(), stride0());
  }
  std::span<const T> slice0(std::size_t i) const {
    return std::span<const T>(data_).subspan(i * stride0(), stride0());
  }

  template <typename U>
  Tensor<U> cast() const {
    if (data_.empty() && shape_.empty()) return Tensor<U>();
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      out[i] = static_cast<U>(data_[i]);
    }
    return out;
  }

  // Same shape, all zeros; a default-constructed tensor stays empty.
  Tensor zeros_like() const { return data_.empty() && shape_.empty() ? Tensor() : Tensor(shape_, T{0}); }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Row-major 2-D field of reals: masks, saliency maps, colour planes.
template <typename T>
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, T fill = T{})
      : rows(r), cols(c), values(r * c, fill) {}

  T& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  const T& at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::size_t size() const noexcept { return values.size(); }

  bool operator==(const Grid&) const = default;
};

}  // namespace gfsr
