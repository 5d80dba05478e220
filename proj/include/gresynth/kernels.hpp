#pragma once
// Data-parallel arithmetic kernels with runtime ISA selection.
//
// Every kernel has a scalar reference implementation. On x86-64 the float
// kernels additionally have AVX2+FMA and AVX-512F variants; the fastest one
// the CPU supports is chosen on first use. GRESYNTH_SIMD=scalar|avx2|avx512
// in the environment pins the choice (an unsupported request falls back to
// the best supported ISA).
//
// Matrices are row-major. Double-precision GEMM always runs the reference
// path; it exists for gradient checks, not throughput.

#include <cstddef>
#include <span>
#include <string_view>

namespace gresynth::kernels {

enum class Isa { Scalar, Avx2, Avx512 };

enum class Trans { No, Yes };

std::string_view isa_name(Isa isa) noexcept;
bool isa_supported(Isa isa) noexcept;

/// ISA used by the dispatching entry points below.
Isa active_isa() noexcept;

/// Pins the dispatch target. Returns false (and leaves the selection
/// unchanged) when the CPU or build lacks the requested ISA.
bool set_active_isa(Isa isa) noexcept;

/// C = alpha * op(A) * op(B) + beta * C, with op(A) m x k and op(B) k x n.
/// When beta == 0, C is write-only.
void gemm(Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
void gemm(Trans ta, Trans tb, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);

/// y = a * x + b * y
void axpby(float a, std::span<const float> x, float b, std::span<float> y);
void axpby(double a, std::span<const double> x, double b, std::span<double> y);

/// Sum of x[i] * y[i], accumulated in double.
double dot(std::span<const float> x, std::span<const float> y);
double dot(std::span<const double> x, std::span<const double> y);

/// Bias-corrected Adam step:
///   m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
///   p -= step_size * m / (sqrt(v * v_correction) + eps)
/// where step_size = lr / (1 - b1^t) and v_correction = 1 / (1 - b2^t).
struct AdamStep {
  double step_size;
  double beta1;
  double beta2;
  double v_correction;
  double eps;
};
void adam_update(const AdamStep& s, std::span<float> param, std::span<const float> grad,
                 std::span<float> m, std::span<float> v);
void adam_update(const AdamStep& s, std::span<double> param, std::span<const double> grad,
                 std::span<double> m, std::span<double> v);

/// ema = decay * ema + (1 - decay) * raw
void ema_update(double decay, std::span<float> ema, std::span<const float> raw);
void ema_update(double decay, std::span<double> ema, std::span<const double> raw);

// Direct access to one implementation, bypassing dispatch. Used by the
// equivalence tests and benchmarks. Calling a variant the CPU does not
// support is undefined behaviour; check isa_supported() first.
namespace variant {
void gemm(Isa isa, Trans ta, Trans tb, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
void axpby(Isa isa, float a, std::span<const float> x, float b, std::span<float> y);
double dot(Isa isa, std::span<const float> x, std::span<const float> y);
void adam_update(Isa isa, const AdamStep& s, std::span<float> param, std::span<const float> grad,
                 std::span<float> m, std::span<float> v);
void ema_update(Isa isa, double decay, std::span<float> ema, std::span<const float> raw);
}  // namespace variant

}  // namespace gresynth::kernels
