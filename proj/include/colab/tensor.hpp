#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace colab {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

/// Dense row-major array. Rank 1 for vectors, rank 2 for matrices and
/// batches (rows are examples).
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), values_(shape_size(shape_), fill) {
    check_extents();
  }

  BasicTensor(Shape shape, std::vector<T> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    check_extents();
    if (values_.size() != shape_size(shape_)) {
      throw std::invalid_argument("tensor: " + std::to_string(values_.size()) +
                                  " values do not fill shape " + shape_string(shape_));
    }
  }

  static BasicTensor vector(std::initializer_list<T> values) {
    return BasicTensor({values.size()}, std::vector<T>(values));
  }

  static BasicTensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<T> values) {
    return BasicTensor({rows, cols}, std::vector<T>(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  /// Extent of the leading axis; 1 for rank-1 tensors viewed as a single row.
  std::size_t rows() const { return shape_.size() >= 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }
  T& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  std::span<T> row(std::size_t r) { return std::span<T>(values_).subspan(r * cols(), cols()); }
  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(values_).subspan(r * cols(), cols());
  }

  std::vector<T>& storage() { return values_; }
  const std::vector<T>& storage() const { return values_; }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(shape_, std::vector<U>(values_.begin(), values_.end()));
  }

  BasicTensor& operator+=(const BasicTensor& other) {
    require_same_shape(other, "+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
  }

  BasicTensor& operator-=(const BasicTensor& other) {
    require_same_shape(other, "-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
  }

  BasicTensor& operator*=(T factor) {
    for (T& v : values_) v *= factor;
    return *this;
  }

  friend BasicTensor operator+(BasicTensor a, const BasicTensor& b) { return a += b; }
  friend BasicTensor operator-(BasicTensor a, const BasicTensor& b) { return a -= b; }
  friend BasicTensor operator*(BasicTensor a, T factor) { return a *= factor; }
  friend BasicTensor operator*(T factor, BasicTensor a) { return a *= factor; }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

  void require_same_shape(const BasicTensor& other, const char* what) const {
    if (shape_ != other.shape_) {
      throw std::invalid_argument(std::string("tensor ") + what + ": shape " +
                                  shape_string(shape_) + " vs " + shape_string(other.shape_));
    }
  }

 private:
  void check_extents() const {
    for (std::size_t e : shape_) {
      if (e == 0) throw std::invalid_argument("tensor: zero extent in shape " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> values_;
};

using Tensor = BasicTensor<double>;

template <typename A, typename B>
auto dot(const A& a, const B& b) {
  using T = std::remove_cvref_t<decltype(*std::begin(a))>;
  T acc{0};
  auto ib = std::begin(b);
  for (auto ia = std::begin(a); ia != std::end(a); ++ia, ++ib) acc += *ia * *ib;
  return acc;
}

template <typename R>
auto norm_l2(const R& v) {
  return std::sqrt(dot(v, v));
}

template <typename R>
auto norm_l1(const R& v) {
  using T = std::remove_cvref_t<decltype(*std::begin(v))>;
  T acc{0};
  for (T x : v) acc += std::abs(x);
  return acc;
}

template <typename R>
auto norm_linf(const R& v) {
  using T = std::remove_cvref_t<decltype(*std::begin(v))>;
  T acc{0};
  for (T x : v) acc = std::max(acc, std::abs(x));
  return acc;
}

/// sign with sign(0) = 0.
template <typename T>
T sign(T v) {
  return static_cast<T>((T{0} < v) - (v < T{0}));
}

/// Index of the first maximal element.
template <typename R>
std::size_t argmax(const R& v) {
  return static_cast<std::size_t>(std::max_element(std::begin(v), std::end(v)) - std::begin(v));
}

}  // namespace colab
