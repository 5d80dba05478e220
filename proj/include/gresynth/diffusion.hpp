#pragma once
// Forward diffusion, the linear-beta noise schedule with uniform timestep
// subsampling, and the deterministic (eta = 0) reverse sampler.
//
// Index convention: virtual timesteps are 1-based, t in 1..T. Index 0 is
// the terminal "clean" state with alpha_bar(0) == 1. Storage is 0-based;
// the accessors below take virtual indices and hide the offset.

#include <cstdint>
#include <functional>
#include <span>
#include <type_traits>
#include <vector>

#include "gresynth/tensor.hpp"

namespace gresynth::diffusion {

struct ScheduleParams {
  int virtual_steps = 1000;
  int sampled_steps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> betas, std::vector<int> tau);

  int virtual_steps() const noexcept { return static_cast<int>(beta_.size()); }
  /// Number of selected timesteps K.
  int size() const noexcept { return static_cast<int>(tau_.size()); }

  /// beta_t for t in 1..T.
  double beta(int t) const;
  /// alpha_bar_t for t in 0..T (alpha_bar_0 == 1).
  double alpha_bar(int t) const;

  /// Selected virtual timesteps, strictly increasing.
  std::span<const int> tau() const noexcept { return tau_; }
  int tau_at(int position) const;
  /// Virtual timestep preceding tau[position] in the reverse chain (0 at the end).
  int previous(int position) const;
  bool contains(int t) const;

  std::span<const double> betas() const noexcept { return beta_; }
  std::span<const double> alpha_bars() const noexcept { return alpha_bar_; }

 private:
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
  std::vector<int> tau_;
};

/// Linear betas from beta_1 to beta_T inclusive over T virtual steps, with
/// tau_j = 1 + j * (T / K) for j = 0..K-1.
NoiseSchedule build_schedule(int virtual_steps, int sampled_steps, double beta_start,
                             double beta_end);
inline NoiseSchedule build_schedule(const ScheduleParams& p) {
  return build_schedule(p.virtual_steps, p.sampled_steps, p.beta_start, p.beta_end);
}

/// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps
template <typename T>
Tensor<T> forward_diffuse(const Tensor<T>& x0, const Tensor<T>& eps, int t,
                          const NoiseSchedule& schedule);

/// Per-sample timesteps; timesteps.size() must equal x0.n().
template <typename T>
Tensor<T> forward_diffuse(const Tensor<T>& x0, const Tensor<T>& eps, std::span<const int> timesteps,
                          const NoiseSchedule& schedule);

/// One generalized reverse step from t to t_prev (t_prev < t, or t_prev == t
/// for the identity). With eta == 0 the step is deterministic and `noise` is
/// ignored; with eta > 0 a noise tensor of x_t's shape is required.
/// x0_clip > 0 clamps the implied x0 estimate to [-x0_clip, x0_clip] and
/// re-derives the noise direction from the clamped estimate.
template <typename T>
Tensor<T> ddim_step(const Tensor<T>& x_t, const Tensor<T>& eps_pred, int t, int t_prev,
                    const NoiseSchedule& schedule, double eta = 0.0,
                    const std::type_identity_t<Tensor<T>>* noise = nullptr,
                    double x0_clip = 0.0);

/// Predicts noise from the channel stack [conditions..., x_t] at virtual step t.
/// Must return an [n, 1, h, w] tensor.
template <typename T>
using NoisePredictor = std::function<Tensor<T>(const Tensor<T>& x_cat, int t)>;

/// Reverse chain over every element of tau, largest first, ending at t = 0.
/// x_T is drawn from a standard normal seeded by `seed`; the result depends
/// only on (conditions, predictor, schedule, seed, eta, x0_clip).
template <typename T>
Tensor<T> sample(const Tensor<T>& conditions, const NoisePredictor<T>& predictor,
                 const NoiseSchedule& schedule, std::uint64_t seed, double eta = 0.0,
                 double x0_clip = 0.0);

/// Fills t with i.i.d. standard normal draws from rng.
template <typename T, typename Rng>
void fill_normal(Tensor<T>& t, Rng& rng);

}  // namespace gresynth::diffusion

#include <random>

namespace gresynth::diffusion {
template <typename T, typename Rng>
void fill_normal(Tensor<T>& t, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : t.storage()) v = static_cast<T>(normal(rng));
}
}  // namespace gresynth::diffusion
