#include "gresynth/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace gresynth::diffusion {

NoiseSchedule::NoiseSchedule(std::vector<double> betas, std::vector<int> tau)
    : beta_(std::move(betas)), tau_(std::move(tau)) {
  alpha_bar_.resize(beta_.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < beta_.size(); ++i) {
    prod *= 1.0 - beta_[i];
    alpha_bar_[i] = prod;
  }
  for (std::size_t j = 0; j < tau_.size(); ++j) {
    if (tau_[j] < 1 || tau_[j] > virtual_steps())
      throw ParameterError("tau entry outside the virtual schedule");
    if (j > 0 && tau_[j] <= tau_[j - 1]) throw ParameterError("tau must be strictly increasing");
  }
}

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > virtual_steps()) throw ParameterError("beta: invalid virtual index");
  return beta_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  if (t < 0 || t > virtual_steps())
    throw ParameterError("alpha_bar: invalid virtual index " + std::to_string(t));
  return alpha_bar_[static_cast<std::size_t>(t - 1)];
}

int NoiseSchedule::tau_at(int position) const {
  if (position < 0 || position >= size()) throw ParameterError("tau position out of range");
  return tau_[static_cast<std::size_t>(position)];
}

int NoiseSchedule::previous(int position) const {
  return position == 0 ? 0 : tau_at(position - 1);
}

bool NoiseSchedule::contains(int t) const {
  return std::binary_search(tau_.begin(), tau_.end(), t);
}

NoiseSchedule build_schedule(int virtual_steps, int sampled_steps, double beta_start,
                             double beta_end) {
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ParameterError("noise schedule requires 0 < beta_1 <= beta_T < 1");
  if (sampled_steps < 1 || sampled_steps > virtual_steps)
    throw ParameterError("noise schedule requires 1 <= K <= T");
  if (virtual_steps % sampled_steps != 0)
    throw ParameterError("noise schedule requires T divisible by K");

  std::vector<double> betas(static_cast<std::size_t>(virtual_steps));
  for (int i = 0; i < virtual_steps; ++i) {
    const double frac = virtual_steps == 1 ? 0.0 : static_cast<double>(i) / (virtual_steps - 1);
    betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
  }
  const int stride = virtual_steps / sampled_steps;
  std::vector<int> tau(static_cast<std::size_t>(sampled_steps));
  for (int j = 0; j < sampled_steps; ++j) tau[static_cast<std::size_t>(j)] = 1 + j * stride;
  return NoiseSchedule(std::move(betas), std::move(tau));
}

namespace {

template <typename T>
void diffuse_into(const T* x0, const T* eps, std::size_t n, double alpha_bar, T* out) {
  const T a = static_cast<T>(std::sqrt(alpha_bar));
  const T b = static_cast<T>(std::sqrt(1.0 - alpha_bar));
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x0[i] + b * eps[i];
}

}  // namespace

template <typename T>
Tensor<T> forward_diffuse(const Tensor<T>& x0, const Tensor<T>& eps, int t,
                          const NoiseSchedule& schedule) {
  if (x0.shape() != eps.shape())
    throw ShapeError("forward_diffuse: x0 " + x0.shape().str() + " vs eps " + eps.shape().str());
  if (t < 1 || t > schedule.virtual_steps())
    throw ParameterError("forward_diffuse: invalid virtual index");
  Tensor<T> out(x0.shape());
  diffuse_into(x0.data(), eps.data(), x0.size(), schedule.alpha_bar(t), out.data());
  return out;
}

template <typename T>
Tensor<T> forward_diffuse(const Tensor<T>& x0, const Tensor<T>& eps, std::span<const int> timesteps,
                          const NoiseSchedule& schedule) {
  if (x0.shape() != eps.shape())
    throw ShapeError("forward_diffuse: x0 " + x0.shape().str() + " vs eps " + eps.shape().str());
  if (timesteps.size() != static_cast<std::size_t>(x0.n()))
    throw ShapeError("forward_diffuse: one timestep per sample required");
  Tensor<T> out(x0.shape());
  const std::size_t per = static_cast<std::size_t>(x0.c()) * x0.shape().plane();
  for (int i = 0; i < x0.n(); ++i) {
    const int t = timesteps[static_cast<std::size_t>(i)];
    if (t < 1 || t > schedule.virtual_steps())
      throw ParameterError("forward_diffuse: invalid virtual index");
    diffuse_into(x0.sample(i), eps.sample(i), per, schedule.alpha_bar(t), out.sample(i));
  }
  return out;
}

template <typename T>
Tensor<T> ddim_step(const Tensor<T>& x_t, const Tensor<T>& eps_pred, int t, int t_prev,
                    const NoiseSchedule& schedule, double eta, const std::type_identity_t<Tensor<T>>* noise,
                    double x0_clip) {
  if (x_t.shape() != eps_pred.shape())
    throw ShapeError("ddim_step: x_t " + x_t.shape().str() + " vs eps " + eps_pred.shape().str());
  if (t_prev > t) throw ParameterError("ddim_step: t_prev must not exceed t");
  if (t < 1 || t > schedule.virtual_steps())
    throw ParameterError("ddim_step: invalid virtual index");
  const double ab_t = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t_prev);

  double sigma = 0.0;
  if (eta > 0.0 && t_prev < t) {
    sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_prev);
    if (noise == nullptr || noise->shape() != x_t.shape())
      throw ShapeError("ddim_step: eta > 0 requires a noise tensor shaped like x_t");
  }
  const double sqrt_ab_t = std::sqrt(ab_t);
  const double sqrt_1m_ab_t = std::sqrt(1.0 - ab_t);
  const double sqrt_ab_prev = std::sqrt(ab_prev);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));

  Tensor<T> out(x_t.shape());
  const T* xt = x_t.data();
  const T* ep = eps_pred.data();
  T* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x0_hat = (static_cast<double>(xt[i]) - sqrt_1m_ab_t * ep[i]) / sqrt_ab_t;
    double e = ep[i];
    if (x0_clip > 0.0 && std::abs(x0_hat) > x0_clip) {
      x0_hat = std::clamp(x0_hat, -x0_clip, x0_clip);
      e = (static_cast<double>(xt[i]) - sqrt_ab_t * x0_hat) / sqrt_1m_ab_t;
    }
    double v = sqrt_ab_prev * x0_hat + dir * e;
    if (sigma > 0.0) v += sigma * static_cast<double>(noise->data()[i]);
    o[i] = static_cast<T>(v);
  }
  return out;
}

template <typename T>
Tensor<T> sample(const Tensor<T>& conditions, const NoisePredictor<T>& predictor,
                 const NoiseSchedule& schedule, std::uint64_t seed, double eta,
                 double x0_clip) {
  const Shape4 cs = conditions.shape();
  Tensor<T> x({cs.n, 1, cs.h, cs.w});
  std::mt19937_64 rng(seed);
  fill_normal(x, rng);

  Tensor<T> noise;
  for (int pos = schedule.size() - 1; pos >= 0; --pos) {
    const int t = schedule.tau_at(pos);
    const int t_prev = schedule.previous(pos);
    const Tensor<T> eps = predictor(concat_channels(conditions, x), t);
    if (eps.shape() != x.shape())
      throw ConfigError("noise predictor returned " + eps.shape().str() + ", expected " +
                        x.shape().str());
    if (eta > 0.0) {
      noise = Tensor<T>(x.shape());
      fill_normal(noise, rng);
      x = ddim_step(x, eps, t, t_prev, schedule, eta, &noise, x0_clip);
    } else {
      x = ddim_step(x, eps, t, t_prev, schedule, 0.0, nullptr, x0_clip);
    }
  }
  return x;
}

template Tensor<float> forward_diffuse(const Tensor<float>&, const Tensor<float>&, int,
                                       const NoiseSchedule&);
template Tensor<double> forward_diffuse(const Tensor<double>&, const Tensor<double>&, int,
                                        const NoiseSchedule&);
template Tensor<float> forward_diffuse(const Tensor<float>&, const Tensor<float>&,
                                       std::span<const int>, const NoiseSchedule&);
template Tensor<double> forward_diffuse(const Tensor<double>&, const Tensor<double>&,
                                        std::span<const int>, const NoiseSchedule&);
template Tensor<float> ddim_step(const Tensor<float>&, const Tensor<float>&, int, int,
                                 const NoiseSchedule&, double, const Tensor<float>*, double);
template Tensor<double> ddim_step(const Tensor<double>&, const Tensor<double>&, int, int,
                                  const NoiseSchedule&, double, const Tensor<double>*, double);
template Tensor<float> sample(const Tensor<float>&, const NoisePredictor<float>&,
                              const NoiseSchedule&, std::uint64_t, double, double);
template Tensor<double> sample(const Tensor<double>&, const NoisePredictor<double>&,
                               const NoiseSchedule&, std::uint64_t, double, double);

}  // namespace gresynth::diffusion
