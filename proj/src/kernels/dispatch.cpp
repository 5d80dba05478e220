#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kernel_table.hpp"

namespace gresynth::kernels {

using detail::KernelTable;

namespace {

const KernelTable& table_for(Isa isa) noexcept {
  switch (isa) {
#if defined(GRESYNTH_HAVE_AVX512)
    case Isa::Avx512:
      return detail::avx512_table();
#endif
#if defined(GRESYNTH_HAVE_AVX2)
    case Isa::Avx2:
      return detail::avx2_table();
#endif
    default:
      return detail::scalar_table();
  }
}

Isa best_supported() noexcept {
  if (isa_supported(Isa::Avx512)) return Isa::Avx512;
  if (isa_supported(Isa::Avx2)) return Isa::Avx2;
  return Isa::Scalar;
}

Isa initial_isa() noexcept {
  const char* env = std::getenv("GRESYNTH_SIMD");
  if (env != nullptr) {
    const std::string_view req(env);
    Isa want = Isa::Scalar;
    if (req == "avx2") want = Isa::Avx2;
    if (req == "avx512") want = Isa::Avx512;
    if (isa_supported(want)) return want;
  }
  return best_supported();
}

std::atomic<Isa>& selected() noexcept {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

const KernelTable& active() noexcept { return table_for(selected().load(std::memory_order_relaxed)); }

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::Avx2:
      return "avx2";
    case Isa::Avx512:
      return "avx512";
    default:
      return "scalar";
  }
}

bool isa_supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(GRESYNTH_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::Avx512:
#if defined(GRESYNTH_HAVE_AVX512)
      return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() noexcept { return selected().load(std::memory_order_relaxed); }

bool set_active_isa(Isa isa) noexcept {
  if (!isa_supported(isa)) return false;
  selected().store(isa, std::memory_order_relaxed);
  return true;
}

void gemm(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  active().gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
void gemm(Trans ta, Trans tb, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  detail::gemm_f64(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void axpby(float a, std::span<const float> x, float b, std::span<float> y) {
  active().axpby(a, x, b, y);
}
void axpby(double a, std::span<const double> x, double b, std::span<double> y) {
  detail::axpby_f64(a, x, b, y);
}

double dot(std::span<const float> x, std::span<const float> y) { return active().dot(x, y); }
double dot(std::span<const double> x, std::span<const double> y) { return detail::dot_f64(x, y); }

void adam_update(const AdamStep& s, std::span<float> param, std::span<const float> grad,
                 std::span<float> m, std::span<float> v) {
  active().adam_update(s, param, grad, m, v);
}
void adam_update(const AdamStep& s, std::span<double> param, std::span<const double> grad,
                 std::span<double> m, std::span<double> v) {
  detail::adam_f64(s, param, grad, m, v);
}

void ema_update(double decay, std::span<float> ema, std::span<const float> raw) {
  active().ema_update(decay, ema, raw);
}
void ema_update(double decay, std::span<double> ema, std::span<const double> raw) {
  detail::ema_f64(decay, ema, raw);
}

namespace variant {
void gemm(Isa isa, Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  table_for(isa).gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
void axpby(Isa isa, float a, std::span<const float> x, float b, std::span<float> y) {
  table_for(isa).axpby(a, x, b, y);
}
double dot(Isa isa, std::span<const float> x, std::span<const float> y) {
  return table_for(isa).dot(x, y);
}
void adam_update(Isa isa, const AdamStep& s, std::span<float> param, std::span<const float> grad,
                 std::span<float> m, std::span<float> v) {
  table_for(isa).adam_update(s, param, grad, m, v);
}
void ema_update(Isa isa, double decay, std::span<float> ema, std::span<const float> raw) {
  table_for(isa).ema_update(decay, ema, raw);
}
}  // namespace variant

}  // namespace gresynth::kernels
