#include "gresynth/baselines/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gresynth/config_json.hpp"
#include "gresynth/error.hpp"
#include "gresynth/log.hpp"

namespace gresynth::baselines {

using train::GanLossKind;

nn::DenoiserConfig generator_config(const nn::DenoiserConfig& denoiser) {
  nn::DenoiserConfig g = denoiser;
  if (g.time_conditioning) {
    g.time_conditioning = false;
    g.in_channels = denoiser.in_channels - 1;
  }
  g.validate();
  return g;
}

Generator::Generator(const nn::DenoiserConfig& cfg, std::uint64_t seed) : net(cfg) {
  if (cfg.time_conditioning) throw ConfigError("baseline generators take no timestep input");
  state = nn::build_denoiser(net, seed);
  adam = train::AdamMoments(net.parameter_count());
  grads.assign(net.parameter_count(), 0.0f);
}

namespace {

int norm_groups(int channels) {
  for (int g = std::min(32, channels); g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

}  // namespace

PatchDiscriminator::PatchDiscriminator(int in_channels, int base_channels, int n_layers)
    : in_(in_channels) {
  if (in_channels < 2) throw ConfigError("discriminator needs conditions plus a candidate channel");
  if (base_channels < 1 || n_layers < 1) throw ConfigError("discriminator needs at least one layer");
  int prev = in_channels;
  for (int i = 0; i <= n_layers; ++i) {
    const int width = base_channels << std::min(i, 3);
    const int stride = i < n_layers ? 2 : 1;
    convs_.emplace_back(layout_, "disc.conv." + std::to_string(i), prev, width, 4, stride, 1);
    if (i > 0) norms_.emplace_back(layout_, "disc.norm." + std::to_string(i), width, norm_groups(width));
    acts_.emplace_back(0.2f);
    prev = width;
  }
  convs_.emplace_back(layout_, "disc.out", prev, 1, 4, 1, 1);
}

std::vector<float> PatchDiscriminator::initialize(std::uint64_t seed) const {
  std::vector<float> p(layout_.total());
  nn::Rng rng(seed);
  for (const auto& c : convs_) c.init(p.data(), rng);
  for (const auto& n : norms_) n.init(p.data());
  return p;
}

int PatchDiscriminator::output_size(int input_size) const {
  int s = input_size;
  for (const auto& c : convs_) {
    s = c.out_size(s);
    if (s < 1)
      throw ShapeError("input of size " + std::to_string(input_size) +
                       " is too small for the patch discriminator");
  }
  return s;
}

Tensor<float> PatchDiscriminator::forward(const Tensor<float>& x, std::span<const float> params,
                                          bool train) {
  if (x.c() != in_)
    throw ConfigError("discriminator expects " + std::to_string(in_) + " channels, got " +
                      std::to_string(x.c()));
  if (params.size() != layout_.total()) throw ConfigError("discriminator parameter count mismatch");
  output_size(std::min(x.h(), x.w()));
  const float* p = params.data();
  Tensor<float> h = x;
  for (std::size_t i = 0; i + 1 < convs_.size(); ++i) {
    h = convs_[i].forward(h, p, train);
    if (i > 0) h = norms_[i - 1].forward(h, p, train);
    h = acts_[i].forward(h, train);
  }
  h = convs_.back().forward(h, p, train);
  nn::check_finite(h, "discriminator output");
  return h;
}

Tensor<float> PatchDiscriminator::backward(const Tensor<float>& d, std::span<const float> params,
                                           std::span<float> grads) {
  const float* p = params.data();
  float* g = grads.data();
  Tensor<float> dh = convs_.back().backward(d, p, g);
  for (std::size_t i = convs_.size() - 1; i-- > 0;) {
    dh = acts_[i].backward(dh);
    if (i > 0) dh = norms_[i - 1].backward(dh, p, g);
    dh = convs_[i].backward(dh, p, g);
  }
  return dh;
}

Discriminator::Discriminator(int in_channels, const train::GanConfig& gan, std::uint64_t seed)
    : net(in_channels, gan.disc_channels, gan.disc_layers) {
  raw = net.initialize(seed);
  adam = train::AdamMoments(raw.size());
  grads.assign(raw.size(), 0.0f);
}

double l1_loss(const Tensor<float>& pred, const Tensor<float>& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("prediction " + pred.shape().str() + " vs target " + target.shape().str());
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    s += std::abs(static_cast<double>(pred.data()[i]) - target.data()[i]);
  return s / static_cast<double>(pred.size());
}

namespace {

void check_generator_input(const Generator& gen, const Tensor<float>& conditions,
                           const Tensor<float>& targets) {
  if (conditions.c() != gen.net.config().in_channels)
    throw ConfigError("generator expects " + std::to_string(gen.net.config().in_channels) +
                      " condition channels, batch has " + std::to_string(conditions.c()));
  if (targets.empty()) throw DataError("training batch has no target channel");
}

/// d(mean |pred - target|)/d pred, scaled by `weight`.
Tensor<float> l1_gradient(const Tensor<float>& pred, const Tensor<float>& target, float weight) {
  Tensor<float> d(pred.shape());
  const float g = weight / static_cast<float>(pred.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const float diff = pred.data()[i] - target.data()[i];
    d.data()[i] = diff > 0.0f ? g : (diff < 0.0f ? -g : 0.0f);
  }
  return d;
}

void apply_generator_update(Generator& gen, const Tensor<float>& d_pred,
                            const train::TrainConfig& cfg) {
  std::fill(gen.grads.begin(), gen.grads.end(), 0.0f);
  gen.net.backward(d_pred, gen.state.raw, gen.grads);
  ++gen.state.step;
  train::adam_step(gen.state.raw, gen.grads, gen.adam, gen.state.step, cfg);
  train::ema_update(gen.state, cfg.ema_decay);
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Mean over the map of the per-element loss against label y; gradient scaled by `scale`.
double score_loss(const Tensor<float>& d, double y, GanLossKind kind, double scale,
                  Tensor<float>* grad) {
  const double n = static_cast<double>(d.size());
  if (grad) *grad = Tensor<float>(d.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double x = d.data()[i];
    double g;
    if (kind == GanLossKind::LeastSquares) {
      s += (x - y) * (x - y);
      g = 2.0 * (x - y);
    } else {
      s += softplus(x) - y * x;
      g = sigmoid(x) - y;
    }
    if (grad) grad->data()[i] = static_cast<float>(scale * g / n);
  }
  return s / n;
}

Tensor<float> last_channel(const Tensor<float>& x) {
  Tensor<float> out({x.n(), 1, x.h(), x.w()});
  for (int i = 0; i < x.n(); ++i)
    std::copy_n(x.plane(i, x.c() - 1), x.shape().plane(), out.sample(i));
  return out;
}

}  // namespace

double l1_train_step(Generator& gen, const Tensor<float>& conditions, const Tensor<float>& targets,
                     const train::TrainConfig& cfg) {
  check_generator_input(gen, conditions, targets);
  const Tensor<float> pred = gen.net.forward(conditions, {}, gen.state.raw, true);
  const double loss = l1_loss(pred, targets);
  if (!std::isfinite(loss)) return loss;
  apply_generator_update(gen, l1_gradient(pred, targets, 1.0f), cfg);
  return loss;
}

double discriminator_loss(const Tensor<float>& d_real, const Tensor<float>& d_fake,
                          GanLossKind kind, Tensor<float>* g_real, Tensor<float>* g_fake) {
  return 0.5 * (score_loss(d_real, 1.0, kind, 0.5, g_real) + score_loss(d_fake, 0.0, kind, 0.5, g_fake));
}

double generator_adversarial_loss(const Tensor<float>& d_fake, GanLossKind kind,
                                  Tensor<float>* g_fake) {
  return score_loss(d_fake, 1.0, kind, 1.0, g_fake);
}

GanLosses pix2pix_train_step(Generator& gen, Discriminator& disc, const Tensor<float>& conditions,
                             const Tensor<float>& targets, const train::TrainConfig& cfg,
                             const train::GanConfig& gan) {
  check_generator_input(gen, conditions, targets);
  if (disc.net.in_channels() != conditions.c() + 1)
    throw ConfigError("discriminator channel count does not match the conditions");
  GanLosses out;
  const Tensor<float> fake = gen.net.forward(conditions, {}, gen.state.raw, true);
  out.l1 = l1_loss(fake, targets);

  // Discriminator: real and fake pairs share the conditions.
  const Tensor<float> real_pair = concat_channels(conditions, targets);
  const Tensor<float> fake_pair = concat_channels(conditions, fake);
  std::fill(disc.grads.begin(), disc.grads.end(), 0.0f);
  Tensor<float> g_real, g_fake;
  const Tensor<float> d_real = disc.net.forward(real_pair, disc.raw, true);
  const double real_term = score_loss(d_real, 1.0, gan.gan_loss_kind, 0.5, &g_real);
  disc.net.backward(g_real, disc.raw, disc.grads);
  const Tensor<float> d_fake_old = disc.net.forward(fake_pair, disc.raw, true);
  const double fake_term = score_loss(d_fake_old, 0.0, gan.gan_loss_kind, 0.5, &g_fake);
  disc.net.backward(g_fake, disc.raw, disc.grads);
  out.disc_loss = 0.5 * (real_term + fake_term);
  if (!std::isfinite(out.disc_loss) || !std::isfinite(out.l1)) {
    out.gen_loss = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  ++disc.step;
  train::adam_step(disc.raw, disc.grads, disc.adam, disc.step, cfg);

  if (!gan.adversarial) {
    out.gen_loss = out.l1;
    apply_generator_update(gen, l1_gradient(fake, targets, 1.0f), cfg);
    return out;
  }
  const Tensor<float> d_fake = disc.net.forward(fake_pair, disc.raw, true);
  Tensor<float> g_adv;
  out.adversarial = generator_adversarial_loss(d_fake, gan.gan_loss_kind, &g_adv);
  std::vector<float> scratch(disc.raw.size(), 0.0f);
  const Tensor<float> d_input = last_channel(disc.net.backward(g_adv, disc.raw, scratch));
  Tensor<float> d_pred = l1_gradient(fake, targets, static_cast<float>(gan.l1_weight));
  for (std::size_t i = 0; i < d_pred.size(); ++i) d_pred.data()[i] += d_input.data()[i];
  out.gen_loss = gan.l1_weight * out.l1 + out.adversarial;
  apply_generator_update(gen, d_pred, cfg);
  return out;
}

bool SaturationMonitor::observe(double disc_loss) {
  if (disc_loss < kThreshold) {
    ++run_;
    return run_ == kSteps;
  }
  run_ = 0;
  return false;
}

UnetL1Method::UnetL1Method(const nn::DenoiserConfig& denoiser, const train::TrainConfig& cfg,
                           std::uint64_t init_seed)
    : cfg_(cfg), gen_(generator_config(denoiser), init_seed) {
  cfg_.validate();
}

train::StepResult UnetL1Method::step(const Tensor<float>& conditions, const Tensor<float>& targets,
                                     train::Rng&) {
  return {l1_train_step(gen_, conditions, targets, cfg_), {}};
}

namespace {

train::Checkpoint generator_checkpoint(const train::Method& m, const Generator& gen,
                                       const train::TrainConfig& cfg) {
  train::Checkpoint ck;
  ck.config = m.metadata;
  ck.config["kind"] = m.kind();
  ck.config["denoiser"] = to_json(gen.net.config());
  ck.config["train"] = to_json(cfg);
  ck.state["step"] = gen.state.step;
  ck.index["model"] = gen.net.layout().entries();
  ck.arrays["raw"] = gen.state.raw;
  ck.arrays["ema"] = gen.state.ema;
  ck.arrays["adam_m"] = gen.adam.m;
  ck.arrays["adam_v"] = gen.adam.v;
  return ck;
}

void restore_generator(const train::Method& m, Generator& gen, const train::Checkpoint& ck) {
  if (ck.config.value("kind", std::string()) != m.kind())
    throw ConfigError("checkpoint holds a '" + ck.config.value("kind", std::string("?")) +
                      "' model, not " + m.kind());
  train::require_congruent(ck, "model", gen.net.layout(), {"raw", "ema", "adam_m", "adam_v"});
  gen.state.raw = ck.arrays.at("raw");
  gen.state.ema = ck.arrays.at("ema");
  gen.adam.m = ck.arrays.at("adam_m");
  gen.adam.v = ck.arrays.at("adam_v");
  gen.state.step = ck.state.at("step").get<long long>();
}

}  // namespace

train::Checkpoint UnetL1Method::checkpoint() const { return generator_checkpoint(*this, gen_, cfg_); }

void UnetL1Method::restore(const train::Checkpoint& ck) { restore_generator(*this, gen_, ck); }

Pix2PixMethod::Pix2PixMethod(const nn::DenoiserConfig& denoiser, const train::TrainConfig& cfg,
                             const train::GanConfig& gan, std::uint64_t init_seed)
    : cfg_(cfg),
      gan_(gan),
      gen_(generator_config(denoiser), init_seed),
      disc_(generator_config(denoiser).in_channels + 1, gan, init_seed ^ 0x9e3779b97f4a7c15ULL) {
  cfg_.validate();
  gan_.validate();
  disc_.net.output_size(denoiser.image_size);
}

train::StepResult Pix2PixMethod::step(const Tensor<float>& conditions, const Tensor<float>& targets,
                                      train::Rng&) {
  const GanLosses l = pix2pix_train_step(gen_, disc_, conditions, targets, cfg_, gan_);
  if (monitor_.observe(l.disc_loss))
    warn("pix2pix discriminator loss below 1e-6 for " + std::to_string(SaturationMonitor::kSteps) +
         " consecutive steps (generator step " + std::to_string(gen_.state.step) + ")");
  return {l.gen_loss, {{"disc", l.disc_loss}, {"l1", l.l1}, {"adversarial", l.adversarial}}};
}

train::Checkpoint Pix2PixMethod::checkpoint() const {
  train::Checkpoint ck = generator_checkpoint(*this, gen_, cfg_);
  ck.config["gan"] = to_json(gan_);
  ck.state["disc_step"] = disc_.step;
  ck.state["saturation_run"] = monitor_.run_length();
  ck.index["disc"] = disc_.net.layout().entries();
  ck.arrays["disc_raw"] = disc_.raw;
  ck.arrays["disc_adam_m"] = disc_.adam.m;
  ck.arrays["disc_adam_v"] = disc_.adam.v;
  return ck;
}

void Pix2PixMethod::restore(const train::Checkpoint& ck) {
  restore_generator(*this, gen_, ck);
  train::require_congruent(ck, "disc", disc_.net.layout(), {"disc_raw", "disc_adam_m", "disc_adam_v"});
  disc_.raw = ck.arrays.at("disc_raw");
  disc_.adam.m = ck.arrays.at("disc_adam_m");
  disc_.adam.v = ck.arrays.at("disc_adam_v");
  disc_.step = ck.state.at("disc_step").get<long long>();
  monitor_.set_run_length(ck.state.value("saturation_run", 0LL));
}

}  // namespace gresynth::baselines
