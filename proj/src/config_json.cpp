#include "gresynth/config_json.hpp"

#include <algorithm>
#include <cstring>

#include "gresynth/error.hpp"

namespace gresynth {

void require_known_keys(const json& j, std::initializer_list<const char*> allowed,
                        const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                [&](const char* a) { return k == a; });
    if (!ok) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

json to_json(const diffusion::ScheduleParams& p) {
  return {{"virtual_steps", p.virtual_steps},
          {"sampled_steps", p.sampled_steps},
          {"beta_start", p.beta_start},
          {"beta_end", p.beta_end}};
}

json to_json(const nn::DenoiserConfig& c) {
  return {{"in_channels", c.in_channels},
          {"out_channels", c.out_channels},
          {"base_channels", c.base_channels},
          {"channel_multipliers", c.channel_multipliers},
          {"resblocks_per_level", c.resblocks_per_level},
          {"groupnorm_groups", c.groupnorm_groups},
          {"attention_resolutions", c.attention_resolutions},
          {"image_size", c.image_size},
          {"time_conditioning", c.time_conditioning}};
}

json to_json(const train::TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"batch_size", c.batch_size},
          {"total_iterations", c.total_iterations},
          {"ema_decay", c.ema_decay},
          {"checkpoint_interval", c.checkpoint_interval},
          {"log_interval", c.log_interval},
          {"grad_clip", c.grad_clip},
          {"seed", c.seed}};
}

json to_json(const train::GanConfig& c) {
  return {{"l1_weight", c.l1_weight},
          {"disc_channels", c.disc_channels},
          {"disc_layers", c.disc_layers},
          {"gan_loss", train::gan_loss_name(c.gan_loss_kind)},
          {"adversarial", c.adversarial}};
}

diffusion::ScheduleParams schedule_from_json(const json& j, diffusion::ScheduleParams p) {
  const std::string w = "schedule";
  require_known_keys(j, {"virtual_steps", "sampled_steps", "beta_start", "beta_end"}, w);
  read_key(j, "virtual_steps", p.virtual_steps, w);
  read_key(j, "sampled_steps", p.sampled_steps, w);
  read_key(j, "beta_start", p.beta_start, w);
  read_key(j, "beta_end", p.beta_end, w);
  return p;
}

nn::DenoiserConfig denoiser_from_json(const json& j, nn::DenoiserConfig c) {
  const std::string w = "denoiser";
  require_known_keys(j,
                     {"in_channels", "out_channels", "base_channels", "channel_multipliers",
                      "resblocks_per_level", "groupnorm_groups", "attention_resolutions",
                      "image_size", "time_conditioning"},
                     w);
  read_key(j, "in_channels", c.in_channels, w);
  read_key(j, "out_channels", c.out_channels, w);
  read_key(j, "base_channels", c.base_channels, w);
  read_key(j, "channel_multipliers", c.channel_multipliers, w);
  read_key(j, "resblocks_per_level", c.resblocks_per_level, w);
  read_key(j, "groupnorm_groups", c.groupnorm_groups, w);
  read_key(j, "attention_resolutions", c.attention_resolutions, w);
  read_key(j, "image_size", c.image_size, w);
  read_key(j, "time_conditioning", c.time_conditioning, w);
  return c;
}

train::TrainConfig train_from_json(const json& j, train::TrainConfig c) {
  const std::string w = "train";
  require_known_keys(j,
                     {"learning_rate", "adam_beta1", "adam_beta2", "adam_eps", "batch_size",
                      "total_iterations", "ema_decay", "checkpoint_interval", "log_interval",
                      "grad_clip", "seed"},
                     w);
  read_key(j, "learning_rate", c.learning_rate, w);
  read_key(j, "adam_beta1", c.adam_beta1, w);
  read_key(j, "adam_beta2", c.adam_beta2, w);
  read_key(j, "adam_eps", c.adam_eps, w);
  read_key(j, "batch_size", c.batch_size, w);
  read_key(j, "total_iterations", c.total_iterations, w);
  read_key(j, "ema_decay", c.ema_decay, w);
  read_key(j, "checkpoint_interval", c.checkpoint_interval, w);
  read_key(j, "log_interval", c.log_interval, w);
  read_key(j, "grad_clip", c.grad_clip, w);
  read_key(j, "seed", c.seed, w);
  return c;
}

train::GanConfig gan_from_json(const json& j, train::GanConfig c) {
  const std::string w = "gan";
  require_known_keys(j, {"l1_weight", "disc_channels", "disc_layers", "gan_loss", "adversarial"},
                     w);
  read_key(j, "l1_weight", c.l1_weight, w);
  read_key(j, "disc_channels", c.disc_channels, w);
  read_key(j, "disc_layers", c.disc_layers, w);
  read_key(j, "adversarial", c.adversarial, w);
  if (j.contains("gan_loss")) {
    std::string name;
    read_key(j, "gan_loss", name, w);
    c.gan_loss_kind = train::parse_gan_loss(name);
  }
  return c;
}

}  // namespace gresynth
