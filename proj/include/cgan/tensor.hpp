#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cgan/errors.hpp"

namespace cgan {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense row-major array. The scalar type is the precision mode of the store:
// float for training, double for gradient checks and density evaluation.
// Extents may be zero (an empty matrix is a valid concat operand).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError("tensor: shape " + shape_string(shape_) + " holds " +
                           std::to_string(shape_size(shape_)) + " elements, got " +
                           std::to_string(data_.size()));
    }
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("tensor: ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  static Tensor vector(std::initializer_list<T> values) {
    return Tensor({values.size()}, std::vector<T>(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix view helpers; rank-1 tensors count as a single row.
  std::size_t rows() const { return rank() == 1 ? 1 : (rank() == 0 ? 0 : shape_[0]); }
  std::size_t cols() const { return rank() == 0 ? 0 : (rank() == 1 ? shape_[0] : size() / shape_[0]); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  // Rows [first, first + count) as a new tensor.
  Tensor slice_rows(std::size_t first, std::size_t count) const {
    if (first + count > rows()) throw DimensionError("tensor: row slice out of range");
    Shape s = shape_;
    s[0] = count;
    const std::size_t c = cols();
    return Tensor(std::move(s), std::vector<T>(data_.begin() + static_cast<std::ptrdiff_t>(first * c),
                                               data_.begin() + static_cast<std::ptrdiff_t>((first + count) * c)));
  }

  Tensor gather_rows(std::span<const std::size_t> indices) const {
    Shape s = shape_;
    s[0] = indices.size();
    Tensor out(std::move(s));
    const std::size_t c = cols();
    for (std::size_t i = 0; i < indices.size(); ++i) {
      std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * c), c,
                  out.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
    }
    return out;
  }

  // Value equality (same shape and elementwise ==).
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Byte-level equality; distinguishes -0.0 from 0.0 and compares NaN payloads.
template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() &&
         (a.size() == 0 || std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0);
}

}  // namespace cgan
