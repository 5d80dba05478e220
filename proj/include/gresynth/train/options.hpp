#pragma once
// Optimization settings shared by the diffusion trainer and the baselines.

#include <cstdint>
#include <string>

namespace gresynth::train {

struct TrainConfig {
  double learning_rate = 2e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 16;
  long long total_iterations = 20000;
  double ema_decay = 0.999;
  long long checkpoint_interval = 50000;
  long long log_interval = 100;
  double grad_clip = 0.0;  // global L2 norm; 0 disables clipping
  std::uint64_t seed = 0;

  /// Throws ParameterError on odd batch size, decay outside (0, 1), etc.
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

enum class GanLossKind { LeastSquares, CrossEntropy };

struct GanConfig {
  double l1_weight = 100.0;
  int disc_channels = 64;
  int disc_layers = 3;
  GanLossKind gan_loss_kind = GanLossKind::LeastSquares;
  /// With false, the generator objective is the plain L1 loss.
  bool adversarial = true;

  void validate() const;
  friend bool operator==(const GanConfig&, const GanConfig&) = default;
};

std::string gan_loss_name(GanLossKind k);
GanLossKind parse_gan_loss(const std::string& name);

}  // namespace gresynth::train
