// AVX2 + FMA kernel variants. Compiled with -mavx2 -mfma; only reached
// through dispatch after a CPUID check.

#include <immintrin.h>

#include <cmath>

#include "kernel_table.hpp"

namespace gresynth::kernels::detail {

namespace {

struct Avx2Micro {
  static constexpr int MR = 6;
  static constexpr int NR = 16;

  static void run(int kc, const float* a, const float* b, float* c, int ldc, float alpha,
                  float beta) {
    __m256 acc[MR][2];
    for (int i = 0; i < MR; ++i) acc[i][0] = acc[i][1] = _mm256_setzero_ps();
    for (int p = 0; p < kc; ++p) {
      const __m256 b0 = _mm256_loadu_ps(b);
      const __m256 b1 = _mm256_loadu_ps(b + 8);
#pragma GCC unroll 6
      for (int i = 0; i < MR; ++i) {
        const __m256 ai = _mm256_broadcast_ss(a + i);
        acc[i][0] = _mm256_fmadd_ps(ai, b0, acc[i][0]);
        acc[i][1] = _mm256_fmadd_ps(ai, b1, acc[i][1]);
      }
      a += MR;
      b += NR;
    }
    const __m256 va = _mm256_set1_ps(alpha);
    if (beta == 0.0f) {
      for (int i = 0; i < MR; ++i) {
        float* row = c + static_cast<std::ptrdiff_t>(i) * ldc;
        _mm256_storeu_ps(row, _mm256_mul_ps(va, acc[i][0]));
        _mm256_storeu_ps(row + 8, _mm256_mul_ps(va, acc[i][1]));
      }
    } else {
      const __m256 vb = _mm256_set1_ps(beta);
      for (int i = 0; i < MR; ++i) {
        float* row = c + static_cast<std::ptrdiff_t>(i) * ldc;
        _mm256_storeu_ps(row, _mm256_add_ps(_mm256_mul_ps(va, acc[i][0]),
                                            _mm256_mul_ps(vb, _mm256_loadu_ps(row))));
        _mm256_storeu_ps(row + 8, _mm256_add_ps(_mm256_mul_ps(va, acc[i][1]),
                                                _mm256_mul_ps(vb, _mm256_loadu_ps(row + 8))));
      }
    }
  }
};

void gemm_f32(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
              const float* b, int ldb, float beta, float* c, int ldc) {
  PackedGemm<Avx2Micro>::run(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void axpby_f32(float a, std::span<const float> x, float b, std::span<float> y) {
  const std::size_t n = y.size();
  const __m256 va = _mm256_set1_ps(a);
  const __m256 vb = _mm256_set1_ps(b);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 r = _mm256_add_ps(_mm256_mul_ps(va, _mm256_loadu_ps(&x[i])),
                                   _mm256_mul_ps(vb, _mm256_loadu_ps(&y[i])));
    _mm256_storeu_ps(&y[i], r);
  }
  for (; i < n; ++i) y[i] = a * x[i] + b * y[i];
}

double dot_f32(std::span<const float> x, std::span<const float> y) {
  const std::size_t n = x.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 vx = _mm256_loadu_ps(&x[i]);
    const __m256 vy = _mm256_loadu_ps(&y[i]);
    acc0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(vx)),
                           _mm256_cvtps_pd(_mm256_castps256_ps128(vy)), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1)),
                           _mm256_cvtps_pd(_mm256_extractf128_ps(vy, 1)), acc1);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) acc += static_cast<double>(x[i]) * y[i];
  return acc;
}

void adam_f32(const AdamStep& s, std::span<float> p, std::span<const float> g, std::span<float> m,
              std::span<float> v) {
  const float b1 = static_cast<float>(s.beta1);
  const float omb1 = static_cast<float>(1.0 - s.beta1);
  const float b2 = static_cast<float>(s.beta2);
  const float omb2 = static_cast<float>(1.0 - s.beta2);
  const float step = static_cast<float>(s.step_size);
  const float vc = static_cast<float>(s.v_correction);
  const float eps = static_cast<float>(s.eps);
  const __m256 vb1 = _mm256_set1_ps(b1), vomb1 = _mm256_set1_ps(omb1);
  const __m256 vb2 = _mm256_set1_ps(b2), vomb2 = _mm256_set1_ps(omb2);
  const __m256 vstep = _mm256_set1_ps(step), vvc = _mm256_set1_ps(vc), veps = _mm256_set1_ps(eps);
  const std::size_t n = p.size();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gi = _mm256_loadu_ps(&g[i]);
    const __m256 mi = _mm256_add_ps(_mm256_mul_ps(vb1, _mm256_loadu_ps(&m[i])),
                                    _mm256_mul_ps(vomb1, gi));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(vb2, _mm256_loadu_ps(&v[i])),
                                    _mm256_mul_ps(vomb2, _mm256_mul_ps(gi, gi)));
    const __m256 den = _mm256_add_ps(_mm256_sqrt_ps(_mm256_mul_ps(vi, vvc)), veps);
    const __m256 upd = _mm256_div_ps(_mm256_mul_ps(vstep, mi), den);
    _mm256_storeu_ps(&m[i], mi);
    _mm256_storeu_ps(&v[i], vi);
    _mm256_storeu_ps(&p[i], _mm256_sub_ps(_mm256_loadu_ps(&p[i]), upd));
  }
  for (; i < n; ++i) {
    const float gi = g[i];
    m[i] = b1 * m[i] + omb1 * gi;
    v[i] = b2 * v[i] + omb2 * (gi * gi);
    p[i] = p[i] - step * m[i] / (std::sqrt(v[i] * vc) + eps);
  }
}

void ema_f32(double decay, std::span<float> ema, std::span<const float> raw) {
  const float d = static_cast<float>(decay);
  const float omd = static_cast<float>(1.0 - decay);
  const __m256 vd = _mm256_set1_ps(d), vomd = _mm256_set1_ps(omd);
  const std::size_t n = ema.size();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(&ema[i], _mm256_add_ps(_mm256_mul_ps(vd, _mm256_loadu_ps(&ema[i])),
                                            _mm256_mul_ps(vomd, _mm256_loadu_ps(&raw[i]))));
  }
  for (; i < n; ++i) ema[i] = d * ema[i] + omd * raw[i];
}

}  // namespace

const KernelTable& avx2_table() noexcept {
  static const KernelTable table{&gemm_f32, &axpby_f32, &dot_f32, &adam_f32, &ema_f32};
  return table;
}

}  // namespace gresynth::kernels::detail
