#pragma once
// Dense NCHW tensor used by the diffusion core and the networks.

#include <algorithm>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gresynth/error.hpp"

namespace gresynth {

struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  friend bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const {
    std::ostringstream os;
    os << '[' << n << ',' << c << ',' << h << ',' << w << ']';
    return os.str();
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape4 shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) throw ShapeError("tensor data size does not match shape");
  }

  const Shape4& shape() const noexcept { return shape_; }
  int n() const noexcept { return shape_.n; }
  int c() const noexcept { return shape_.c; }
  int h() const noexcept { return shape_.h; }
  int w() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T* plane(int n, int c) noexcept {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }
  const T* plane(int n, int c) const noexcept {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }
  T* sample(int n) noexcept { return plane(n, 0); }
  const T* sample(int n) const noexcept { return plane(n, 0); }

  T& operator()(int n, int c, int y, int x) noexcept {
    return plane(n, c)[static_cast<std::size_t>(y) * shape_.w + x];
  }
  T operator()(int n, int c, int y, int x) const noexcept {
    return plane(n, c)[static_cast<std::size_t>(y) * shape_.w + x];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same data, new shape with equal element count.
  void reshape(Shape4 s) {
    if (s.numel() != data_.size()) throw ShapeError("reshape changes element count");
    shape_ = s;
  }

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  std::vector<To> out(t.size());
  std::transform(t.storage().begin(), t.storage().end(), out.begin(),
                 [](From v) { return static_cast<To>(v); });
  return Tensor<To>(t.shape(), std::move(out));
}

/// Concatenates along the channel axis. All inputs must share n, h, w.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw ShapeError("concat_channels: mismatched shapes " + a.shape().str() + " vs " +
                     b.shape().str());
  Tensor<T> out({a.n(), a.c() + b.c(), a.h(), a.w()});
  const std::size_t pa = static_cast<std::size_t>(a.c()) * a.shape().plane();
  const std::size_t pb = static_cast<std::size_t>(b.c()) * b.shape().plane();
  for (int i = 0; i < a.n(); ++i) {
    std::copy_n(a.sample(i), pa, out.sample(i));
    std::copy_n(b.sample(i), pb, out.sample(i) + pa);
  }
  return out;
}

/// Splits channels [0, first) and [first, c) of x into two tensors.
template <typename T>
void split_channels(const Tensor<T>& x, int first, Tensor<T>& a, Tensor<T>& b) {
  a = Tensor<T>({x.n(), first, x.h(), x.w()});
  b = Tensor<T>({x.n(), x.c() - first, x.h(), x.w()});
  const std::size_t pa = static_cast<std::size_t>(first) * x.shape().plane();
  const std::size_t pb = static_cast<std::size_t>(x.c() - first) * x.shape().plane();
  for (int i = 0; i < x.n(); ++i) {
    std::copy_n(x.sample(i), pa, a.sample(i));
    std::copy_n(x.sample(i) + pa, pb, b.sample(i));
  }
}

}  // namespace gresynth
