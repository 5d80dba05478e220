#pragma once
// Comparison methods trained on the same slices as the diffusion model:
// a direct-regression U-Net with L1 loss and a pix2pix-style conditional GAN.
//
// The generator is the denoiser backbone without the noisy input channel and
// without timestep conditioning. The discriminator is a patch discriminator
// (4x4 convolutions, LeakyReLU 0.2) scoring (conditions, candidate) stacks.

#include <cstdint>
#include <string>
#include <vector>

#include "gresynth/nn/layers.hpp"
#include "gresynth/nn/unet.hpp"
#include "gresynth/train/options.hpp"
#include "gresynth/train/trainer.hpp"

namespace gresynth::baselines {

/// Generator architecture derived from a denoiser config.
nn::DenoiserConfig generator_config(const nn::DenoiserConfig& denoiser);

struct Generator {
  Generator(const nn::DenoiserConfig& cfg, std::uint64_t seed);
  nn::UNet<float> net;
  nn::WeightState<float> state;
  train::AdamMoments adam;
  std::vector<float> grads;
};

class PatchDiscriminator {
 public:
  /// n_layers stride-2 convolutions (the first without normalization), one
  /// stride-1 convolution, then a 1-channel stride-1 output convolution.
  PatchDiscriminator(int in_channels, int base_channels, int n_layers);

  const nn::ParameterLayout& layout() const noexcept { return layout_; }
  std::vector<float> initialize(std::uint64_t seed) const;
  int in_channels() const noexcept { return in_; }
  /// Side of the score map for a square input; ShapeError if it would vanish.
  int output_size(int input_size) const;

  Tensor<float> forward(const Tensor<float>& x, std::span<const float> params, bool train);
  Tensor<float> backward(const Tensor<float>& d, std::span<const float> params,
                         std::span<float> grads);

 private:
  int in_ = 0;
  nn::ParameterLayout layout_;
  std::vector<nn::Conv2d<float>> convs_;
  std::vector<nn::GroupNorm<float>> norms_;  // norms_[i] follows convs_[i + 1]
  std::vector<nn::LeakyReLU<float>> acts_;
};

struct Discriminator {
  Discriminator(int in_channels, const train::GanConfig& gan, std::uint64_t seed);
  PatchDiscriminator net;
  std::vector<float> raw;
  train::AdamMoments adam;
  std::vector<float> grads;
  long long step = 0;
};

/// Mean |pred - target|.
double l1_loss(const Tensor<float>& pred, const Tensor<float>& target);

/// One generator update on the L1 objective. Returns the loss.
double l1_train_step(Generator& gen, const Tensor<float>& conditions, const Tensor<float>& targets,
                     const train::TrainConfig& cfg);

struct GanLosses {
  double gen_loss = 0.0;   // l1_weight * l1 + adversarial (l1 alone when adversarial is off)
  double disc_loss = 0.0;
  double l1 = 0.0;
  double adversarial = 0.0;
};

/// Least-squares: ((D(real) - 1)^2 + D(fake)^2) / 2, each averaged over the score map.
/// Cross-entropy: the same on logits with binary cross-entropy.
double discriminator_loss(const Tensor<float>& d_real, const Tensor<float>& d_fake,
                          train::GanLossKind kind, Tensor<float>* g_real = nullptr,
                          Tensor<float>* g_fake = nullptr);
/// Generator adversarial term: mean (D(fake) - 1)^2, or cross-entropy against "real".
double generator_adversarial_loss(const Tensor<float>& d_fake, train::GanLossKind kind,
                                  Tensor<float>* g_fake = nullptr);

/// Generator forward, discriminator update on real and fake pairs, then
/// generator update on l1_weight * L1 + adversarial. With gan.adversarial
/// false the generator update is exactly l1_train_step's.
GanLosses pix2pix_train_step(Generator& gen, Discriminator& disc, const Tensor<float>& conditions,
                             const Tensor<float>& targets, const train::TrainConfig& cfg,
                             const train::GanConfig& gan);

/// Flags a discriminator whose loss stays below 1e-6 for 1000 consecutive steps.
class SaturationMonitor {
 public:
  static constexpr double kThreshold = 1e-6;
  static constexpr long long kSteps = 1000;
  /// Returns true on the step the condition is first met (once per episode).
  bool observe(double disc_loss);
  long long run_length() const noexcept { return run_; }
  void set_run_length(long long n) noexcept { run_ = n; }

 private:
  long long run_ = 0;
};

class UnetL1Method final : public train::Method {
 public:
  UnetL1Method(const nn::DenoiserConfig& denoiser, const train::TrainConfig& cfg,
               std::uint64_t init_seed);
  std::string kind() const override { return "unet-l1"; }
  train::StepResult step(const Tensor<float>& conditions, const Tensor<float>& targets,
                         train::Rng& rng) override;
  long long step_count() const override { return gen_.state.step; }
  train::Checkpoint checkpoint() const override;
  void restore(const train::Checkpoint& ck) override;
  const std::vector<float>& ema_weights() const override { return gen_.state.ema; }
  Generator& generator() noexcept { return gen_; }

 private:
  train::TrainConfig cfg_;
  Generator gen_;
};

class Pix2PixMethod final : public train::Method {
 public:
  Pix2PixMethod(const nn::DenoiserConfig& denoiser, const train::TrainConfig& cfg,
                const train::GanConfig& gan, std::uint64_t init_seed);
  std::string kind() const override { return "pix2pix"; }
  train::StepResult step(const Tensor<float>& conditions, const Tensor<float>& targets,
                         train::Rng& rng) override;
  long long step_count() const override { return gen_.state.step; }
  train::Checkpoint checkpoint() const override;
  void restore(const train::Checkpoint& ck) override;
  const std::vector<float>& ema_weights() const override { return gen_.state.ema; }
  Generator& generator() noexcept { return gen_; }
  Discriminator& discriminator() noexcept { return disc_; }

 private:
  train::TrainConfig cfg_;
  train::GanConfig gan_;
  Generator gen_;
  Discriminator disc_;
  SaturationMonitor monitor_;
};

}  // namespace gresynth::baselines
