#pragma once
// Network building blocks with explicit backward passes.
//
// Layers hold structure and the offsets of their parameters; the parameter
// values and gradient buffers are passed in on every call, so one layer
// object can evaluate raw or EMA weights. forward(..., train=true) caches
// what backward needs; a layer instance therefore serves one thread at a
// time, while the weights themselves are shared read-only.
//
// backward() accumulates into the gradient buffer; callers zero it.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gresynth/nn/parameters.hpp"
#include "gresynth/tensor.hpp"

namespace gresynth::nn {

using Rng = std::mt19937_64;

/// Uniform fan-average variance scaling (bound sqrt(3 / fan_avg)).
template <typename T>
void init_uniform(T* w, std::size_t n, double fan_in, double fan_out, Rng& rng);

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterLayout& layout, const std::string& name, int in_ch, int out_ch, int kernel,
         int stride, int pad);

  void init(T* params, Rng& rng, bool zero = false) const;
  Tensor<T> forward(const Tensor<T>& x, const T* params, bool train);
  Tensor<T> backward(const Tensor<T>& dy, const T* params, T* grads);

  int in_channels() const noexcept { return in_; }
  int out_channels() const noexcept { return out_; }
  int out_size(int in_size) const noexcept { return (in_size + 2 * pad_ - k_) / stride_ + 1; }

 private:
  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  std::size_t w_off_ = 0, b_off_ = 0;
  Tensor<T> x_;
};

/// Transposed convolution; weight layout [in, out, k, k].
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterLayout& layout, const std::string& name, int in_ch, int out_ch,
                  int kernel, int stride, int pad);

  void init(T* params, Rng& rng) const;
  Tensor<T> forward(const Tensor<T>& x, const T* params, bool train);
  Tensor<T> backward(const Tensor<T>& dy, const T* params, T* grads);

 private:
  int in_ = 0, out_ = 0, k_ = 2, stride_ = 2, pad_ = 0;
  std::size_t w_off_ = 0, b_off_ = 0;
  Tensor<T> x_;
};

template <typename T>
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(ParameterLayout& layout, const std::string& name, int channels, int groups,
            double eps = 1e-5);

  void init(T* params) const;
  Tensor<T> forward(const Tensor<T>& x, const T* params, bool train);
  Tensor<T> backward(const Tensor<T>& dy, const T* params, T* grads);

 private:
  int channels_ = 0, groups_ = 1;
  double eps_ = 1e-5;
  std::size_t g_off_ = 0, b_off_ = 0;
  Tensor<T> xhat_;
  std::vector<double> rstd_;
};

template <typename T>
class SiLU {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool train);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  Tensor<T> x_;
};

template <typename T>
class LeakyReLU {
 public:
  explicit LeakyReLU(T slope = T(0.2)) : slope_(slope) {}
  Tensor<T> forward(const Tensor<T>& x, bool train);
  Tensor<T> backward(const Tensor<T>& dy);

 private:
  T slope_;
  Tensor<T> x_;
};

/// y = x W^T + b on [n, in, 1, 1] tensors.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterLayout& layout, const std::string& name, int in_features, int out_features);

  void init(T* params, Rng& rng) const;
  Tensor<T> forward(const Tensor<T>& x, const T* params, bool train);
  Tensor<T> backward(const Tensor<T>& dy, const T* params, T* grads);

 private:
  int in_ = 0, out_ = 0;
  std::size_t w_off_ = 0, b_off_ = 0;
  Tensor<T> x_;
};

/// Single-head spatial self-attention with a residual connection.
template <typename T>
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(ParameterLayout& layout, const std::string& name, int channels, int groups);

  void init(T* params, Rng& rng) const;
  Tensor<T> forward(const Tensor<T>& x, const T* params, bool train);
  Tensor<T> backward(const Tensor<T>& dy, const T* params, T* grads);

 private:
  int channels_ = 0;
  GroupNorm<T> norm_;
  Conv2d<T> qkv_;
  Conv2d<T> proj_;
  Tensor<T> qkv_out_;
  std::vector<T> probs_;
};

/// Residual block: GN-SiLU-Conv, optional timestep bias, GN-SiLU-Conv, skip.
template <typename T>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(ParameterLayout& layout, const std::string& name, int in_ch, int out_ch, int groups,
           int emb_dim);

  void init(T* params, Rng& rng) const;
  /// emb is the activated timestep embedding [n, emb_dim, 1, 1], or null
  /// when the block was built without time conditioning.
  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>* emb, const T* params, bool train);
  /// Returns dx; accumulates the embedding gradient into d_emb when non-null.
  Tensor<T> backward(const Tensor<T>& dy, Tensor<T>* d_emb, const T* params, T* grads);

  int out_channels() const noexcept { return out_; }

 private:
  int in_ = 0, out_ = 0, emb_dim_ = 0;
  GroupNorm<T> norm1_, norm2_;
  SiLU<T> act1_, act2_;
  Conv2d<T> conv1_, conv2_;
  Linear<T> emb_proj_;
  bool has_skip_conv_ = false;
  Conv2d<T> skip_;
};

/// Sinusoidal embedding of (possibly fractional) timesteps, shape [n, dim, 1, 1].
template <typename T>
Tensor<T> timestep_embedding(const std::vector<int>& timesteps, int dim);

/// Throws NumericError naming `where` if any element is not finite.
template <typename T>
void check_finite(const Tensor<T>& t, const std::string& where);

}  // namespace gresynth::nn
