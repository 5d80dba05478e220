// Scalar reference kernels. These define the semantics the SIMD variants are
// tested against; keep them as plain loops.

#include <cmath>

#include "kernel_table.hpp"

namespace gresynth::kernels::detail {

namespace {

template <typename T>
void gemm_ref(Trans ta, Trans tb, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
              int ldb, T beta, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int p = 0; p < k; ++p) acc += at(a, lda, ta, i, p) * at(b, ldb, tb, p, j);
      crow[j] = beta == T(0) ? alpha * acc : alpha * acc + beta * crow[j];
    }
  }
}

template <typename T>
void axpby_ref(T a, std::span<const T> x, T b, std::span<T> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a * x[i] + b * y[i];
}

template <typename T>
double dot_ref(std::span<const T> x, std::span<const T> y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x[i]) * y[i];
  return acc;
}

template <typename T>
void adam_ref(const AdamStep& s, std::span<T> p, std::span<const T> g, std::span<T> m,
              std::span<T> v) {
  const T b1 = static_cast<T>(s.beta1);
  const T omb1 = static_cast<T>(1.0 - s.beta1);
  const T b2 = static_cast<T>(s.beta2);
  const T omb2 = static_cast<T>(1.0 - s.beta2);
  const T step = static_cast<T>(s.step_size);
  const T vc = static_cast<T>(s.v_correction);
  const T eps = static_cast<T>(s.eps);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T gi = g[i];
    m[i] = b1 * m[i] + omb1 * gi;
    v[i] = b2 * v[i] + omb2 * (gi * gi);
    p[i] = p[i] - step * m[i] / (std::sqrt(v[i] * vc) + eps);
  }
}

template <typename T>
void ema_ref(double decay, std::span<T> ema, std::span<const T> raw) {
  const T d = static_cast<T>(decay);
  const T omd = static_cast<T>(1.0 - decay);
  for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = d * ema[i] + omd * raw[i];
}

void gemm_f32(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
              const float* b, int ldb, float beta, float* c, int ldc) {
  gemm_ref<float>(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
void axpby_f32(float a, std::span<const float> x, float b, std::span<float> y) {
  axpby_ref<float>(a, x, b, y);
}
double dot_f32(std::span<const float> x, std::span<const float> y) { return dot_ref<float>(x, y); }
void adam_f32(const AdamStep& s, std::span<float> p, std::span<const float> g, std::span<float> m,
              std::span<float> v) {
  adam_ref<float>(s, p, g, m, v);
}
void ema_f32(double decay, std::span<float> ema, std::span<const float> raw) {
  ema_ref<float>(decay, ema, raw);
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable table{&gemm_f32, &axpby_f32, &dot_f32, &adam_f32, &ema_f32};
  return table;
}

void gemm_f64(Trans ta, Trans tb, int m, int n, int k, double alpha, const double* a, int lda,
              const double* b, int ldb, double beta, double* c, int ldc) {
  gemm_ref<double>(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
void axpby_f64(double a, std::span<const double> x, double b, std::span<double> y) {
  axpby_ref<double>(a, x, b, y);
}
double dot_f64(std::span<const double> x, std::span<const double> y) {
  return dot_ref<double>(x, y);
}
void adam_f64(const AdamStep& s, std::span<double> p, std::span<const double> g,
              std::span<double> m, std::span<double> v) {
  adam_ref<double>(s, p, g, m, v);
}
void ema_f64(double decay, std::span<double> ema, std::span<const double> raw) {
  ema_ref<double>(decay, ema, raw);
}

}  // namespace gresynth::kernels::detail
