#include "gresynth/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gresynth/error.hpp"
#include "gresynth/kernels.hpp"

namespace gresynth::nn {

using kernels::Trans;

namespace {

template <typename T>
std::vector<T>& scratch(int slot) {
  thread_local std::vector<T> bufs[3];
  return bufs[slot];
}

// Unfolds one [c, h, w] image into [c * k * k, oh * ow] patches.
// Output columns [lo, hi) whose input column ox*stride - pad + kx lies inside [0, w).
inline void valid_span(int w, int ow, int stride, int pad, int kx, int& lo, int& hi) {
  const int off = pad - kx;
  lo = off > 0 ? (off + stride - 1) / stride : 0;
  const int last = w - 1 + off;
  hi = last < 0 ? 0 : std::min(ow, last / stride + 1);
  if (hi < lo) hi = lo;
}

template <typename T>
void im2col(const T* img, int c, int h, int w, int k, int stride, int pad, int oh, int ow,
            T* col) {
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int ci = 0; ci < c; ++ci) {
    const T* plane = img + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * cols;
        int lo, hi;
        valid_span(w, ow, stride, pad, kx, lo, hi);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst, ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w - pad + kx;
          std::fill(dst, dst + lo, T(0));
          if (stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride];
          }
          std::fill(dst + hi, dst + ow, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patches back, accumulating into img.
template <typename T>
void col2im(const T* col, int c, int h, int w, int k, int stride, int pad, int oh, int ow,
            T* img) {
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int ci = 0; ci < c; ++ci) {
    T* plane = img + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * cols;
        int lo, hi;
        valid_span(w, ow, stride, pad, kx, lo, hi);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * w - pad + kx;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          if (stride == 1) {
            for (int ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox * stride] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void add_channel_bias(Tensor<T>& y, const T* bias) {
  const std::size_t hw = y.shape().plane();
  for (int n = 0; n < y.n(); ++n)
    for (int c = 0; c < y.c(); ++c) {
      T* p = y.plane(n, c);
      const T b = bias[c];
      for (std::size_t i = 0; i < hw; ++i) p[i] += b;
    }
}

template <typename T>
void accumulate_channel_sums(const Tensor<T>& dy, T* grad_bias) {
  const std::size_t hw = dy.shape().plane();
  for (int c = 0; c < dy.c(); ++c) {
    double acc = 0.0;
    for (int n = 0; n < dy.n(); ++n) {
      const T* p = dy.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) acc += p[i];
    }
    grad_bias[c] += static_cast<T>(acc);
  }
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

}  // namespace

template <typename T>
void init_uniform(T* w, std::size_t n, double fan_in, double fan_out, Rng& rng) {
  const double bound = std::sqrt(3.0 / std::max(1.0, 0.5 * (fan_in + fan_out)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<T>(dist(rng));
}

template <typename T>
void check_finite(const Tensor<T>& t, const std::string& where) {
  for (const T v : t.storage())
    if (!std::isfinite(v)) throw NumericError("non-finite activation in " + where);
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(ParameterLayout& layout, const std::string& name, int in_ch, int out_ch,
                  int kernel, int stride, int pad)
    : in_(in_ch), out_(out_ch), k_(kernel), stride_(stride), pad_(pad) {
  w_off_ = layout.add(name + ".weight", {out_ch, in_ch, kernel, kernel});
  b_off_ = layout.add(name + ".bias", {out_ch});
}

template <typename T>
void Conv2d<T>::init(T* params, Rng& rng, bool zero) const {
  const std::size_t n = static_cast<std::size_t>(out_) * in_ * k_ * k_;
  if (zero) {
    std::fill_n(params + w_off_, n, T(0));
  } else {
    init_uniform(params + w_off_, n, double(in_) * k_ * k_, double(out_) * k_ * k_, rng);
  }
  std::fill_n(params + b_off_, out_, T(0));
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, const T* params, bool train) {
  if (x.c() != in_)
    throw ConfigError("conv expects " + std::to_string(in_) + " channels, got " +
                      std::to_string(x.c()));
  const int oh = out_size(x.h());
  const int ow = out_size(x.w());
  const int ckk = in_ * k_ * k_;
  const int cols = oh * ow;
  const bool pointwise = k_ == 1 && stride_ == 1 && pad_ == 0;
  Tensor<T> y({x.n(), out_, oh, ow});
  auto& col = scratch<T>(0);
  if (!pointwise) col.resize(static_cast<std::size_t>(ckk) * cols);
  for (int n = 0; n < x.n(); ++n) {
    const T* colp = x.sample(n);
    if (!pointwise) {
      im2col(x.sample(n), in_, x.h(), x.w(), k_, stride_, pad_, oh, ow, col.data());
      colp = col.data();
    }
    kernels::gemm(Trans::No, Trans::No, out_, cols, ckk, T(1), params + w_off_, ckk, colp, cols,
                  T(0), y.sample(n), cols);
  }
  add_channel_bias(y, params + b_off_);
  if (train) x_ = x;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy, const T* params, T* grads) {
  const Tensor<T>& x = x_;
  const int oh = dy.h();
  const int ow = dy.w();
  const int ckk = in_ * k_ * k_;
  const int cols = oh * ow;
  const int hw = x.h() * x.w();
  const bool pointwise = k_ == 1 && stride_ == 1 && pad_ == 0;
  Tensor<T> dx(x.shape());
  auto& col = scratch<T>(0);
  auto& dcol = scratch<T>(1);
  if (!pointwise) {
    col.resize(static_cast<std::size_t>(ckk) * cols);
    dcol.resize(static_cast<std::size_t>(ckk) * cols);
  }
  for (int n = 0; n < dy.n(); ++n) {
    const T* colp = x.sample(n);
    if (!pointwise) {
      im2col(x.sample(n), in_, x.h(), x.w(), k_, stride_, pad_, oh, ow, col.data());
      colp = col.data();
    }
    kernels::gemm(Trans::No, Trans::Yes, out_, ckk, cols, T(1), dy.sample(n), cols, colp, cols,
                  T(1), grads + w_off_, ckk);
    if (pointwise) {
      kernels::gemm(Trans::Yes, Trans::No, in_, hw, out_, T(1), params + w_off_, ckk,
                    dy.sample(n), cols, T(0), dx.sample(n), hw);
    } else {
      kernels::gemm(Trans::Yes, Trans::No, ckk, cols, out_, T(1), params + w_off_, ckk,
                    dy.sample(n), cols, T(0), dcol.data(), cols);
      col2im(dcol.data(), in_, x.h(), x.w(), k_, stride_, pad_, oh, ow, dx.sample(n));
    }
  }
  accumulate_channel_sums(dy, grads + b_off_);
  return dx;
}

// ------------------------------------------------------- ConvTranspose2d

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(ParameterLayout& layout, const std::string& name, int in_ch,
                                    int out_ch, int kernel, int stride, int pad)
    : in_(in_ch), out_(out_ch), k_(kernel), stride_(stride), pad_(pad) {
  w_off_ = layout.add(name + ".weight", {in_ch, out_ch, kernel, kernel});
  b_off_ = layout.add(name + ".bias", {out_ch});
}

template <typename T>
void ConvTranspose2d<T>::init(T* params, Rng& rng) const {
  const std::size_t n = static_cast<std::size_t>(out_) * in_ * k_ * k_;
  init_uniform(params + w_off_, n, double(in_) * k_ * k_ / (stride_ * stride_),
               double(out_) * k_ * k_ / (stride_ * stride_), rng);
  std::fill_n(params + b_off_, out_, T(0));
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x, const T* params, bool train) {
  if (x.c() != in_) throw ConfigError("transposed conv: channel mismatch");
  const int oh = (x.h() - 1) * stride_ - 2 * pad_ + k_;
  const int ow = (x.w() - 1) * stride_ - 2 * pad_ + k_;
  const int okk = out_ * k_ * k_;
  const int hw = x.h() * x.w();
  Tensor<T> y({x.n(), out_, oh, ow});
  auto& col = scratch<T>(0);
  col.resize(static_cast<std::size_t>(okk) * hw);
  for (int n = 0; n < x.n(); ++n) {
    kernels::gemm(Trans::Yes, Trans::No, okk, hw, in_, T(1), params + w_off_, okk, x.sample(n),
                  hw, T(0), col.data(), hw);
    col2im(col.data(), out_, oh, ow, k_, stride_, pad_, x.h(), x.w(), y.sample(n));
  }
  add_channel_bias(y, params + b_off_);
  if (train) x_ = x;
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& dy, const T* params, T* grads) {
  const Tensor<T>& x = x_;
  const int okk = out_ * k_ * k_;
  const int hw = x.h() * x.w();
  Tensor<T> dx(x.shape());
  auto& dcol = scratch<T>(1);
  dcol.resize(static_cast<std::size_t>(okk) * hw);
  for (int n = 0; n < dy.n(); ++n) {
    im2col(dy.sample(n), out_, dy.h(), dy.w(), k_, stride_, pad_, x.h(), x.w(), dcol.data());
    kernels::gemm(Trans::No, Trans::No, in_, hw, okk, T(1), params + w_off_, okk, dcol.data(), hw,
                  T(0), dx.sample(n), hw);
    kernels::gemm(Trans::No, Trans::Yes, in_, okk, hw, T(1), x.sample(n), hw, dcol.data(), hw,
                  T(1), grads + w_off_, okk);
  }
  accumulate_channel_sums(dy, grads + b_off_);
  return dx;
}

// ------------------------------------------------------------- GroupNorm

template <typename T>
GroupNorm<T>::GroupNorm(ParameterLayout& layout, const std::string& name, int channels,
                        int groups, double eps)
    : channels_(channels), groups_(groups), eps_(eps) {
  if (groups <= 0 || channels % groups != 0)
    throw ConfigError(name + ": " + std::to_string(groups) + " groups do not divide " +
                      std::to_string(channels) + " channels");
  g_off_ = layout.add(name + ".gamma", {channels});
  b_off_ = layout.add(name + ".beta", {channels});
}

template <typename T>
void GroupNorm<T>::init(T* params) const {
  std::fill_n(params + g_off_, channels_, T(1));
  std::fill_n(params + b_off_, channels_, T(0));
}

template <typename T>
Tensor<T> GroupNorm<T>::forward(const Tensor<T>& x, const T* params, bool train) {
  if (x.c() != channels_) throw ConfigError("group norm: channel mismatch");
  const int cpg = channels_ / groups_;
  const std::size_t hw = x.shape().plane();
  const std::size_t block = static_cast<std::size_t>(cpg) * hw;
  Tensor<T> y(x.shape());
  if (train) {
    xhat_ = Tensor<T>(x.shape());
    rstd_.assign(static_cast<std::size_t>(x.n()) * groups_, 0.0);
  }
  const T* gamma = params + g_off_;
  const T* beta = params + b_off_;
  for (int n = 0; n < x.n(); ++n) {
    for (int g = 0; g < groups_; ++g) {
      const T* src = x.plane(n, g * cpg);
      double mean = 0.0;
      for (std::size_t i = 0; i < block; ++i) mean += src[i];
      mean /= static_cast<double>(block);
      double var = 0.0;
      for (std::size_t i = 0; i < block; ++i) {
        const double d = src[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(block);
      const double rstd = 1.0 / std::sqrt(var + eps_);
      const T m = static_cast<T>(mean);
      const T r = static_cast<T>(rstd);
      for (int cc = 0; cc < cpg; ++cc) {
        const int c = g * cpg + cc;
        const T* s = src + static_cast<std::size_t>(cc) * hw;
        T* d = y.plane(n, c);
        T* xh = train ? xhat_.plane(n, c) : nullptr;
        for (std::size_t i = 0; i < hw; ++i) {
          const T v = (s[i] - m) * r;
          if (xh) xh[i] = v;
          d[i] = v * gamma[c] + beta[c];
        }
      }
      if (train) rstd_[static_cast<std::size_t>(n) * groups_ + g] = rstd;
    }
  }
  return y;
}

template <typename T>
Tensor<T> GroupNorm<T>::backward(const Tensor<T>& dy, const T* params, T* grads) {
  const int cpg = channels_ / groups_;
  const std::size_t hw = dy.shape().plane();
  const double count = static_cast<double>(cpg) * hw;
  const T* gamma = params + g_off_;
  T* g_gamma = grads + g_off_;
  T* g_beta = grads + b_off_;
  Tensor<T> dx(dy.shape());
  std::vector<double> sum_g(channels_, 0.0), sum_b(channels_, 0.0);
  for (int n = 0; n < dy.n(); ++n) {
    for (int g = 0; g < groups_; ++g) {
      double m1 = 0.0, m2 = 0.0;
      for (int cc = 0; cc < cpg; ++cc) {
        const int c = g * cpg + cc;
        const T* d = dy.plane(n, c);
        const T* xh = xhat_.plane(n, c);
        double sg = 0.0, sb = 0.0;
        for (std::size_t i = 0; i < hw; ++i) {
          sg += static_cast<double>(d[i]) * xh[i];
          sb += d[i];
        }
        sum_g[c] += sg;
        sum_b[c] += sb;
        m1 += sb * gamma[c];
        m2 += sg * gamma[c];
      }
      m1 /= count;
      m2 /= count;
      const double rstd = rstd_[static_cast<std::size_t>(n) * groups_ + g];
      for (int cc = 0; cc < cpg; ++cc) {
        const int c = g * cpg + cc;
        const T* d = dy.plane(n, c);
        const T* xh = xhat_.plane(n, c);
        T* o = dx.plane(n, c);
        const T gc = gamma[c];
        const T tm1 = static_cast<T>(m1);
        const T tm2 = static_cast<T>(m2);
        const T tr = static_cast<T>(rstd);
        for (std::size_t i = 0; i < hw; ++i) o[i] = tr * (d[i] * gc - tm1 - xh[i] * tm2);
      }
    }
  }
  for (int c = 0; c < channels_; ++c) {
    g_gamma[c] += static_cast<T>(sum_g[c]);
    g_beta[c] += static_cast<T>(sum_b[c]);
  }
  return dx;
}

// ------------------------------------------------------------ activations

template <typename T>
Tensor<T> SiLU<T>::forward(const Tensor<T>& x, bool train) {
  Tensor<T> y(x.shape());
  const T* s = x.data();
  T* d = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = s[i] / (T(1) + std::exp(-s[i]));
  if (train) x_ = x;
  return y;
}

template <typename T>
Tensor<T> SiLU<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.shape());
  const T* x = x_.data();
  const T* g = dy.data();
  T* o = dx.data();
  for (std::size_t i = 0; i < dy.size(); ++i) {
    const T s = T(1) / (T(1) + std::exp(-x[i]));
    o[i] = g[i] * s * (T(1) + x[i] * (T(1) - s));
  }
  return dx;
}

template <typename T>
Tensor<T> LeakyReLU<T>::forward(const Tensor<T>& x, bool train) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = x.data()[i];
    y.data()[i] = v > T(0) ? v : slope_ * v;
  }
  if (train) x_ = x;
  return y;
}

template <typename T>
Tensor<T> LeakyReLU<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i)
    dx.data()[i] = x_.data()[i] > T(0) ? dy.data()[i] : slope_ * dy.data()[i];
  return dx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(ParameterLayout& layout, const std::string& name, int in_features,
                  int out_features)
    : in_(in_features), out_(out_features) {
  w_off_ = layout.add(name + ".weight", {out_features, in_features});
  b_off_ = layout.add(name + ".bias", {out_features});
}

template <typename T>
void Linear<T>::init(T* params, Rng& rng) const {
  init_uniform(params + w_off_, static_cast<std::size_t>(out_) * in_, in_, out_, rng);
  std::fill_n(params + b_off_, out_, T(0));
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, const T* params, bool train) {
  if (x.c() * x.h() * x.w() != in_) throw ConfigError("linear: feature mismatch");
  Tensor<T> y({x.n(), out_, 1, 1});
  kernels::gemm(Trans::No, Trans::Yes, x.n(), out_, in_, T(1), x.data(), in_, params + w_off_,
                in_, T(0), y.data(), out_);
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < out_; ++o) y.data()[static_cast<std::size_t>(n) * out_ + o] += params[b_off_ + o];
  if (train) x_ = x;
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy, const T* params, T* grads) {
  const int n = dy.n();
  Tensor<T> dx(x_.shape());
  kernels::gemm(Trans::No, Trans::No, n, in_, out_, T(1), dy.data(), out_, params + w_off_, in_,
                T(0), dx.data(), in_);
  kernels::gemm(Trans::Yes, Trans::No, out_, in_, n, T(1), dy.data(), out_, x_.data(), in_, T(1),
                grads + w_off_, in_);
  for (int o = 0; o < out_; ++o) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += dy.data()[static_cast<std::size_t>(i) * out_ + o];
    grads[b_off_ + o] += static_cast<T>(acc);
  }
  return dx;
}

// --------------------------------------------------------- SelfAttention

template <typename T>
SelfAttention<T>::SelfAttention(ParameterLayout& layout, const std::string& name, int channels,
                                int groups)
    : channels_(channels),
      norm_(layout, name + ".norm", channels, groups),
      qkv_(layout, name + ".qkv", channels, 3 * channels, 1, 1, 0),
      proj_(layout, name + ".proj", channels, channels, 1, 1, 0) {}

template <typename T>
void SelfAttention<T>::init(T* params, Rng& rng) const {
  norm_.init(params);
  qkv_.init(params, rng);
  proj_.init(params, rng);
}

template <typename T>
Tensor<T> SelfAttention<T>::forward(const Tensor<T>& x, const T* params, bool train) {
  const int c = channels_;
  const int hw = x.h() * x.w();
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(c)));
  Tensor<T> qkv = qkv_.forward(norm_.forward(x, params, train), params, train);
  Tensor<T> attended({x.n(), c, x.h(), x.w()});
  const std::size_t pp = static_cast<std::size_t>(hw) * hw;
  std::vector<T> local;
  std::vector<T>& probs = train ? probs_ : local;
  probs.resize(static_cast<std::size_t>(x.n()) * pp);
  for (int n = 0; n < x.n(); ++n) {
    const T* q = qkv.sample(n);
    const T* k = q + static_cast<std::size_t>(c) * hw;
    const T* v = k + static_cast<std::size_t>(c) * hw;
    T* p = probs.data() + static_cast<std::size_t>(n) * pp;
    kernels::gemm(Trans::Yes, Trans::No, hw, hw, c, scale, q, hw, k, hw, T(0), p, hw);
    for (int i = 0; i < hw; ++i) {
      T* row = p + static_cast<std::size_t>(i) * hw;
      const T mx = *std::max_element(row, row + hw);
      double sum = 0.0;
      for (int j = 0; j < hw; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
      }
      const T inv = static_cast<T>(1.0 / sum);
      for (int j = 0; j < hw; ++j) row[j] *= inv;
    }
    kernels::gemm(Trans::No, Trans::Yes, c, hw, hw, T(1), v, hw, p, hw, T(0), attended.sample(n),
                  hw);
  }
  Tensor<T> y = proj_.forward(attended, params, train);
  add_inplace(y, x);
  if (train) qkv_out_ = std::move(qkv);
  return y;
}

template <typename T>
Tensor<T> SelfAttention<T>::backward(const Tensor<T>& dy, const T* params, T* grads) {
  const int c = channels_;
  const int hw = dy.h() * dy.w();
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(c)));
  const std::size_t pp = static_cast<std::size_t>(hw) * hw;
  Tensor<T> d_att = proj_.backward(dy, params, grads);
  Tensor<T> d_qkv(qkv_out_.shape());
  std::vector<T> dp(pp);
  for (int n = 0; n < dy.n(); ++n) {
    const T* q = qkv_out_.sample(n);
    const T* k = q + static_cast<std::size_t>(c) * hw;
    const T* v = k + static_cast<std::size_t>(c) * hw;
    const T* p = probs_.data() + static_cast<std::size_t>(n) * pp;
    const T* d_o = d_att.sample(n);
    T* dq = d_qkv.sample(n);
    T* dk = dq + static_cast<std::size_t>(c) * hw;
    T* dv = dk + static_cast<std::size_t>(c) * hw;
    kernels::gemm(Trans::No, Trans::No, c, hw, hw, T(1), d_o, hw, p, hw, T(0), dv, hw);
    kernels::gemm(Trans::Yes, Trans::No, hw, hw, c, T(1), d_o, hw, v, hw, T(0), dp.data(), hw);
    for (int i = 0; i < hw; ++i) {
      const T* prow = p + static_cast<std::size_t>(i) * hw;
      T* drow = dp.data() + static_cast<std::size_t>(i) * hw;
      double inner = 0.0;
      for (int j = 0; j < hw; ++j) inner += static_cast<double>(prow[j]) * drow[j];
      const T ti = static_cast<T>(inner);
      for (int j = 0; j < hw; ++j) drow[j] = prow[j] * (drow[j] - ti);
    }
    kernels::gemm(Trans::No, Trans::Yes, c, hw, hw, scale, k, hw, dp.data(), hw, T(0), dq, hw);
    kernels::gemm(Trans::No, Trans::No, c, hw, hw, scale, q, hw, dp.data(), hw, T(0), dk, hw);
  }
  Tensor<T> dx = norm_.backward(qkv_.backward(d_qkv, params, grads), params, grads);
  add_inplace(dx, dy);
  return dx;
}

// -------------------------------------------------------------- ResBlock

template <typename T>
ResBlock<T>::ResBlock(ParameterLayout& layout, const std::string& name, int in_ch, int out_ch,
                      int groups, int emb_dim)
    : in_(in_ch),
      out_(out_ch),
      emb_dim_(emb_dim),
      norm1_(layout, name + ".norm1", in_ch, groups),
      conv1_(layout, name + ".conv1", in_ch, out_ch, 3, 1, 1) {
  if (emb_dim > 0) emb_proj_ = Linear<T>(layout, name + ".emb", emb_dim, out_ch);
  norm2_ = GroupNorm<T>(layout, name + ".norm2", out_ch, groups);
  conv2_ = Conv2d<T>(layout, name + ".conv2", out_ch, out_ch, 3, 1, 1);
  has_skip_conv_ = in_ch != out_ch;
  if (has_skip_conv_) skip_ = Conv2d<T>(layout, name + ".skip", in_ch, out_ch, 1, 1, 0);
}

template <typename T>
void ResBlock<T>::init(T* params, Rng& rng) const {
  norm1_.init(params);
  conv1_.init(params, rng);
  if (emb_dim_ > 0) emb_proj_.init(params, rng);
  norm2_.init(params);
  conv2_.init(params, rng);
  if (has_skip_conv_) skip_.init(params, rng);
}

template <typename T>
Tensor<T> ResBlock<T>::forward(const Tensor<T>& x, const Tensor<T>* emb, const T* params,
                               bool train) {
  Tensor<T> h = conv1_.forward(act1_.forward(norm1_.forward(x, params, train), train), params,
                               train);
  if (emb_dim_ > 0) {
    if (emb == nullptr) throw ConfigError("residual block requires a timestep embedding");
    const Tensor<T> e = emb_proj_.forward(*emb, params, train);
    const std::size_t hw = h.shape().plane();
    for (int n = 0; n < h.n(); ++n)
      for (int c = 0; c < out_; ++c) {
        T* p = h.plane(n, c);
        const T b = e.data()[static_cast<std::size_t>(n) * out_ + c];
        for (std::size_t i = 0; i < hw; ++i) p[i] += b;
      }
  }
  h = conv2_.forward(act2_.forward(norm2_.forward(h, params, train), train), params, train);
  if (has_skip_conv_) {
    add_inplace(h, skip_.forward(x, params, train));
  } else {
    add_inplace(h, x);
  }
  return h;
}

template <typename T>
Tensor<T> ResBlock<T>::backward(const Tensor<T>& dy, Tensor<T>* d_emb, const T* params,
                                T* grads) {
  Tensor<T> dh = norm2_.backward(act2_.backward(conv2_.backward(dy, params, grads)), params,
                                 grads);
  if (emb_dim_ > 0) {
    Tensor<T> de({dh.n(), out_, 1, 1});
    const std::size_t hw = dh.shape().plane();
    for (int n = 0; n < dh.n(); ++n)
      for (int c = 0; c < out_; ++c) {
        const T* p = dh.plane(n, c);
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += p[i];
        de.data()[static_cast<std::size_t>(n) * out_ + c] = static_cast<T>(acc);
      }
    Tensor<T> d_in = emb_proj_.backward(de, params, grads);
    if (d_emb != nullptr) add_inplace(*d_emb, d_in);
  }
  Tensor<T> dx = norm1_.backward(act1_.backward(conv1_.backward(dh, params, grads)), params,
                                 grads);
  if (has_skip_conv_) {
    add_inplace(dx, skip_.backward(dy, params, grads));
  } else {
    add_inplace(dx, dy);
  }
  return dx;
}

// -------------------------------------------------------------- helpers

template <typename T>
Tensor<T> timestep_embedding(const std::vector<int>& timesteps, int dim) {
  if (dim < 2 || dim % 2 != 0) throw ConfigError("timestep embedding dimension must be even");
  const int half = dim / 2;
  const double step = half > 1 ? std::log(10000.0) / (half - 1) : 0.0;
  Tensor<T> out({static_cast<int>(timesteps.size()), dim, 1, 1});
  for (std::size_t n = 0; n < timesteps.size(); ++n) {
    T* row = out.data() + n * dim;
    for (int i = 0; i < half; ++i) {
      const double arg = timesteps[n] * std::exp(-step * i);
      row[i] = static_cast<T>(std::sin(arg));
      row[half + i] = static_cast<T>(std::cos(arg));
    }
  }
  return out;
}

#define GRESYNTH_INSTANTIATE_LAYERS(T)                                              \
  template void init_uniform<T>(T*, std::size_t, double, double, Rng&);            \
  template void check_finite<T>(const Tensor<T>&, const std::string&);             \
  template class Conv2d<T>;                                                         \
  template class ConvTranspose2d<T>;                                                \
  template class GroupNorm<T>;                                                      \
  template class SiLU<T>;                                                           \
  template class LeakyReLU<T>;                                                      \
  template class Linear<T>;                                                         \
  template class SelfAttention<T>;                                                  \
  template class ResBlock<T>;                                                       \
  template Tensor<T> timestep_embedding<T>(const std::vector<int>&, int);

GRESYNTH_INSTANTIATE_LAYERS(float)
GRESYNTH_INSTANTIATE_LAYERS(double)

}  // namespace gresynth::nn
