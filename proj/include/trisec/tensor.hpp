//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TRISEC_TENSOR_HPP
#define TRISEC_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "trisec/errors.hpp"

namespace trisec {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>{});
}

inline std::string shape_str(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major float tensor. Data length always equals the product of
/// the shape dimensions.
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_shape();
  }

  Tensor(Shape shape, std::vector<float> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
  }

  /// 1-D convenience constructor.
  static Tensor vector(std::vector<float> data) {
    Shape s{data.size()};
    return Tensor(std::move(s), std::move(data));
  }

  const Shape &shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float> &values() const noexcept { return data_; }

  float &operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float &at(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  float at(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }

  /// Same data, new shape of identical element count.
  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size())
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " +
                       shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor &a, const Tensor &b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

private:
  void check_shape() const {
    for (auto d : shape_)
      if (d == 0)
        throw ShapeError("tensor dimensions must be positive, got " +
                         shape_str(shape_));
  }

  Shape shape_;
  std::vector<float> data_;
};

namespace detail {
  inline void require_same_shape(const Tensor &a, const Tensor &b,
                                 const char *what) {
    if (a.shape() != b.shape())
      throw ShapeError(std::string(what) + ": shape mismatch " +
                       shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }

  inline void require_non_empty(const Tensor &a, const char *what) {
    if (a.empty())
      throw ShapeError(std::string(what) + ": empty tensor");
  }
} // namespace detail

inline Tensor add(const Tensor &a, const Tensor &b) {
  detail::require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a[i] + b[i];
  return out;
}

inline Tensor sub(const Tensor &a, const Tensor &b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a[i] - b[i];
  return out;
}

inline Tensor add_scalar(const Tensor &a, float s) {
  Tensor out = a;
  for (auto &v : out.data())
    v += s;
  return out;
}

inline Tensor mul_scalar(const Tensor &a, float s) {
  Tensor out = a;
  for (auto &v : out.data())
    v *= s;
  return out;
}

inline Tensor clamp(const Tensor &a, float lo, float hi) {
  Tensor out = a;
  for (auto &v : out.data())
    v = std::clamp(v, lo, hi);
  return out;
}

inline double sum(const Tensor &a) {
  detail::require_non_empty(a, "sum");
  double acc = 0.0;
  for (float v : a.data())
    acc += v;
  return acc;
}

inline double mean(const Tensor &a) {
  return sum(a) / static_cast<double>(a.size());
}

inline float max(const Tensor &a) {
  detail::require_non_empty(a, "max");
  return *std::max_element(a.data().begin(), a.data().end());
}

/// Index of the largest element; ties resolve to the lowest index.
inline std::size_t argmax(const Tensor &a) {
  detail::require_non_empty(a, "argmax");
  auto d = a.data();
  // max_element returns the first of equal maxima.
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) -
                                  d.begin());
}

/// Dot product accumulated in double.
inline double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw ShapeError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

inline double l2_norm(const Tensor &a) {
  return std::sqrt(dot(a.data(), a.data()));
}

inline float linf_norm(const Tensor &a) {
  float m = 0.0f;
  for (float v : a.data())
    m = std::max(m, std::abs(v));
  return m;
}

inline Tensor one_hot(std::size_t n, std::size_t index) {
  if (index >= n)
    throw ShapeError("one_hot: index " + std::to_string(index) +
                     " out of range for length " + std::to_string(n));
  Tensor t(Shape{n});
  t[index] = 1.0f;
  return t;
}

/// Uniform sample in [0, 1) built from the top 24 bits of one mt19937 draw.
/// Unlike std::uniform_real_distribution the result is identical across
/// standard library implementations.
inline float unit_uniform(std::mt19937 &gen) {
  return static_cast<float>(gen() >> 8) * (1.0f / 16777216.0f);
}

inline Tensor random_uniform(Shape shape, float lo, float hi,
                             std::mt19937 &gen) {
  Tensor t(std::move(shape));
  for (auto &v : t.data())
    v = lo + (hi - lo) * unit_uniform(gen);
  return t;
}

} // namespace trisec

#endif // TRISEC_TENSOR_HPP
