#include "gresynth/train/options.hpp"

#include "gresynth/error.hpp"

namespace gresynth::train {

void TrainConfig::validate() const {
  if (batch_size < 2 || batch_size % 2 != 0)
    throw ParameterError("batch_size must be even and at least 2 (antithetic pairing), got " +
                         std::to_string(batch_size));
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ParameterError("ema_decay must lie in (0, 1)");
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ParameterError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ParameterError("adam_eps must be positive");
  if (total_iterations < 0) throw ParameterError("total_iterations must be non-negative");
  if (checkpoint_interval < 1 || log_interval < 1)
    throw ParameterError("checkpoint and log intervals must be positive");
  if (grad_clip < 0.0) throw ParameterError("grad_clip must be non-negative");
}

void GanConfig::validate() const {
  if (!(l1_weight > 0.0)) throw ParameterError("l1_weight must be positive");
  if (disc_channels < 1 || disc_layers < 1)
    throw ParameterError("discriminator channels and layers must be positive");
}

std::string gan_loss_name(GanLossKind k) {
  return k == GanLossKind::LeastSquares ? "least-squares" : "cross-entropy";
}

GanLossKind parse_gan_loss(const std::string& name) {
  if (name == "least-squares") return GanLossKind::LeastSquares;
  if (name == "cross-entropy") return GanLossKind::CrossEntropy;
  throw ConfigError("unknown gan loss '" + name + "' (expected least-squares or cross-entropy)");
}

}  // namespace gresynth::train
