#pragma once
// Internal: per-ISA kernel tables and the cache-blocked GEMM driver shared by
// the SIMD variants. Each SIMD translation unit instantiates the driver with
// its own microkernel type, so instantiations never collide across ISA flags.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "gresynth/kernels.hpp"

namespace gresynth::kernels::detail {

struct KernelTable {
  void (*gemm)(Trans, Trans, int, int, int, float, const float*, int, const float*, int, float,
               float*, int);
  void (*axpby)(float, std::span<const float>, float, std::span<float>);
  double (*dot)(std::span<const float>, std::span<const float>);
  void (*adam_update)(const AdamStep&, std::span<float>, std::span<const float>, std::span<float>,
                      std::span<float>);
  void (*ema_update)(double, std::span<float>, std::span<const float>);
};

const KernelTable& scalar_table() noexcept;

void gemm_f64(Trans ta, Trans tb, int m, int n, int k, double alpha, const double* a, int lda,
              const double* b, int ldb, double beta, double* c, int ldc);
void axpby_f64(double a, std::span<const double> x, double b, std::span<double> y);
double dot_f64(std::span<const double> x, std::span<const double> y);
void adam_f64(const AdamStep& s, std::span<double> p, std::span<const double> g,
              std::span<double> m, std::span<double> v);
void ema_f64(double decay, std::span<double> ema, std::span<const double> raw);
#if defined(GRESYNTH_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif
#if defined(GRESYNTH_HAVE_AVX512)
const KernelTable& avx512_table() noexcept;
#endif

template <typename T>
inline T at(const T* p, int ld, Trans t, int row, int col) {
  return t == Trans::No ? p[static_cast<std::ptrdiff_t>(row) * ld + col]
                        : p[static_cast<std::ptrdiff_t>(col) * ld + row];
}

// Blocked GEMM in the usual three-level packing scheme. `Micro` supplies
// MR, NR and run(kc, a_panel, b_panel, c, ldc, alpha, beta) for a full tile.
template <typename Micro>
struct PackedGemm {
  static constexpr int MR = Micro::MR;
  static constexpr int NR = Micro::NR;
  static constexpr int KC = 256;
  static constexpr int MC = MR * (96 / MR > 0 ? 96 / MR : 1);
  static constexpr int NC = 2048;

  static void pack_a(Trans ta, const float* a, int lda, int i0, int mc, int p0, int kc,
                     float* out) {
    for (int ir = 0; ir < mc; ir += MR) {
      const int mr = std::min(MR, mc - ir);
      for (int p = 0; p < kc; ++p) {
        float* dst = out + static_cast<std::ptrdiff_t>(ir) * kc + p * MR;
        int i = 0;
        if (ta == Trans::Yes) {
          const float* src = a + static_cast<std::ptrdiff_t>(p0 + p) * lda + (i0 + ir);
          for (; i < mr; ++i) dst[i] = src[i];
        } else {
          for (; i < mr; ++i) dst[i] = a[static_cast<std::ptrdiff_t>(i0 + ir + i) * lda + p0 + p];
        }
        for (; i < MR; ++i) dst[i] = 0.0f;
      }
    }
  }

  static void pack_b(Trans tb, const float* b, int ldb, int p0, int kc, int j0, int nc,
                     float* out) {
    for (int jr = 0; jr < nc; jr += NR) {
      const int nr = std::min(NR, nc - jr);
      for (int p = 0; p < kc; ++p) {
        float* dst = out + static_cast<std::ptrdiff_t>(jr) * kc + p * NR;
        int j = 0;
        if (tb == Trans::No) {
          const float* src = b + static_cast<std::ptrdiff_t>(p0 + p) * ldb + (j0 + jr);
          for (; j < nr; ++j) dst[j] = src[j];
        } else {
          for (; j < nr; ++j) dst[j] = b[static_cast<std::ptrdiff_t>(j0 + jr + j) * ldb + p0 + p];
        }
        for (; j < NR; ++j) dst[j] = 0.0f;
      }
    }
  }

  static void run(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
                  const float* b, int ldb, float beta, float* c, int ldc) {
    if (m <= 0 || n <= 0) return;
    if (k <= 0 || alpha == 0.0f) {
      for (int i = 0; i < m; ++i) {
        float* row = c + static_cast<std::ptrdiff_t>(i) * ldc;
        for (int j = 0; j < n; ++j) row[j] = beta == 0.0f ? 0.0f : beta * row[j];
      }
      return;
    }
    thread_local std::vector<float> a_buf;
    thread_local std::vector<float> b_buf;
    a_buf.resize(static_cast<std::size_t>(MC) * KC);
    b_buf.resize(static_cast<std::size_t>(KC) * (NC + NR));
    alignas(64) float tile[MR * NR];

    for (int jc = 0; jc < n; jc += NC) {
      const int nc = std::min(NC, n - jc);
      for (int pc = 0; pc < k; pc += KC) {
        const int kc = std::min(KC, k - pc);
        const float beta_eff = pc == 0 ? beta : 1.0f;
        pack_b(tb, b, ldb, pc, kc, jc, nc, b_buf.data());
        for (int ic = 0; ic < m; ic += MC) {
          const int mc = std::min(MC, m - ic);
          pack_a(ta, a, lda, ic, mc, pc, kc, a_buf.data());
          for (int jr = 0; jr < nc; jr += NR) {
            const int nr = std::min(NR, nc - jr);
            const float* bp = b_buf.data() + static_cast<std::ptrdiff_t>(jr) * kc;
            for (int ir = 0; ir < mc; ir += MR) {
              const int mr = std::min(MR, mc - ir);
              const float* ap = a_buf.data() + static_cast<std::ptrdiff_t>(ir) * kc;
              float* cp = c + static_cast<std::ptrdiff_t>(ic + ir) * ldc + jc + jr;
              if (mr == MR && nr == NR) {
                Micro::run(kc, ap, bp, cp, ldc, alpha, beta_eff);
              } else {
                Micro::run(kc, ap, bp, tile, NR, alpha, 0.0f);
                for (int i = 0; i < mr; ++i) {
                  float* crow = cp + static_cast<std::ptrdiff_t>(i) * ldc;
                  for (int j = 0; j < nr; ++j) {
                    const float prod = tile[i * NR + j];
                    crow[j] = beta_eff == 0.0f ? prod : prod + beta_eff * crow[j];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
};

}  // namespace gresynth::kernels::detail
