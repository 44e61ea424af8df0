#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <type_traits>
#include <utility>
#include <vector>

#include "dsc/common.hpp"

namespace dsc {

/// Dense multi-dimensional array, row-major and contiguous. Immutable by
/// convention once returned from an operation; the trainer mutates parameter
/// tensors in place but never shares them across concurrent readers.
template <class T>
class Tensor {
  static_assert(std::is_floating_point_v<T>, "Tensor requires float or double");

 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, T fill = T{})
      : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

  static Tensor from(std::vector<std::size_t> shape, std::vector<T> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (checked_size(t.shape_) != values.size()) {
      throw DimensionError("tensor data length does not match its shape");
    }
    t.data_ = std::move(values);
    return t;
  }

  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t extent(std::size_t dim) const { return shape_.at(dim); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t flat) { return data_[flat]; }
  const T& operator[](std::size_t flat) const { return data_[flat]; }

  /// Row-major multi-index access: flat = sum_d idx_d * stride_d.
  template <class... Idx>
  T& operator()(Idx... idx) {
    return data_[flat_index(idx...)];
  }
  template <class... Idx>
  const T& operator()(Idx... idx) const {
    return data_[flat_index(idx...)];
  }

  template <class... Idx>
  std::size_t flat_index(Idx... idx) const {
    static_assert((std::is_integral_v<Idx> && ...));
    const std::size_t indices[] = {static_cast<std::size_t>(idx)...};
    std::size_t flat = 0;
    for (std::size_t d = 0; d < sizeof...(Idx); ++d) {
      flat = flat * shape_[d] + indices[d];
    }
    return flat;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// Same data, new shape; total element count must be unchanged.
  Tensor reshaped(std::vector<std::size_t> shape) const {
    if (checked_size(shape) != size()) {
      throw DimensionError("reshape changes element count");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> t(shape_);
    for (std::size_t i = 0; i < size(); ++i) {
      t[i] = static_cast<U>(data_[i]);
    }
    return t;
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// In-place element-wise +=; shapes must match.
  void accumulate(const Tensor& other) {
    if (shape_ != other.shape_) {
      throw DimensionError("accumulate: shape mismatch");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  }

 private:
  static std::size_t checked_size(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must be non-empty");
    std::size_t n = 1;
    for (std::size_t e : shape) {
      if (e == 0) throw DimensionError("tensor extents must be >= 1");
      n *= e;
    }
    return n;
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

namespace detail {
inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ')';
  return os.str();
}
}  // namespace detail

/// NaN/Inf is a hard error: a divergence must surface at the op that
/// produced it instead of propagating through the training loop.
template <class T>
void ensure_finite(const Tensor<T>& t, const char* what) {
  const T* p = t.data();
  for (std::size_t i = 0, n = t.size(); i < n; ++i) {
    if (!std::isfinite(p[i])) {
      throw NumericError(std::string(what) + ": non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

/// Standard matrix product of two rank-2 tensors.
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul requires rank-2 tensors");
  }
  if (a.extent(1) != b.extent(0)) {
    throw DimensionError("matmul inner extents differ: " + detail::shape_str(a.shape()) +
                         " x " + detail::shape_str(b.shape()));
  }
  const std::size_t rows = a.extent(0), inner = a.extent(1), cols = b.extent(1);
  Tensor<T> out({rows, cols});
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < inner; ++k) {
      const T aik = pa[i * inner + k];
      const T* brow = pb + k * cols;
      T* orow = po + i * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        orow[j] += aik * brow[j];
      }
    }
  }
  ensure_finite(out, "matmul");
  return out;
}

namespace detail {
template <class T, class Fn>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, Fn&& fn, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = fn(a[i], b[i]);
  }
  ensure_finite(out, what);
  return out;
}
}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::zip(a, b, [](T x, T y) { return x + y; }, "add");
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::zip(a, b, [](T x, T y) { return x - y; }, "sub");
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::zip(a, b, [](T x, T y) { return x * y; }, "mul");
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = a[i] * s;
  }
  ensure_finite(out, "scale");
  return out;
}

template <class T, class Fn>
Tensor<T> map(const Tensor<T>& a, Fn&& fn) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = fn(a[i]);
  }
  ensure_finite(out, "map");
  return out;
}

}  // namespace dsc
