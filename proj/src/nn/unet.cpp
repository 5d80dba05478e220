#include "gresynth/nn/unet.hpp"

#include <algorithm>
#include <set>

#include "gresynth/error.hpp"

namespace gresynth::nn {

std::vector<int> DenoiserConfig::level_sizes() const {
  std::vector<int> sizes;
  int s = image_size;
  for (std::size_t l = 0; l < channel_multipliers.size(); ++l) {
    sizes.push_back(s);
    s /= 2;
  }
  return sizes;
}

std::vector<int> DenoiserConfig::realized_widths() const {
  std::vector<int> widths{base_channels};
  const int levels = static_cast<int>(channel_multipliers.size());
  for (int m : channel_multipliers) widths.push_back(base_channels * m);
  for (int l = levels - 1; l >= 0; --l) {
    const int below = l == levels - 1 ? base_channels * channel_multipliers[l]
                                      : base_channels * channel_multipliers[l + 1];
    widths.push_back(below + base_channels * channel_multipliers[l]);
  }
  return widths;
}

void DenoiserConfig::validate() const {
  const int min_in = time_conditioning ? 2 : 1;
  if (in_channels < min_in)
    throw ConfigError("in_channels must be at least " + std::to_string(min_in));
  if (out_channels < 1) throw ConfigError("out_channels must be positive");
  if (base_channels < 2 || base_channels % 2 != 0)
    throw ConfigError("base_channels must be a positive even number");
  if (channel_multipliers.empty()) throw ConfigError("channel_multipliers must not be empty");
  for (int m : channel_multipliers)
    if (m < 1) throw ConfigError("channel multipliers must be positive");
  if (resblocks_per_level < 1) throw ConfigError("resblocks_per_level must be positive");
  const int levels = static_cast<int>(channel_multipliers.size());
  const int factor = 1 << (levels - 1);
  if (image_size < factor || image_size % factor != 0)
    throw ConfigError("image_size " + std::to_string(image_size) + " not divisible by " +
                      std::to_string(factor));
  if (groupnorm_groups < 1) throw ConfigError("groupnorm_groups must be positive");
  for (int w : realized_widths())
    if (w % groupnorm_groups != 0)
      throw ConfigError(std::to_string(groupnorm_groups) + " groups do not divide width " +
                        std::to_string(w));
}

DenoiserConfig DenoiserConfig::full_scale(int n_conditions) {
  DenoiserConfig c;
  c.in_channels = n_conditions + 1;
  c.base_channels = 128;
  c.channel_multipliers = {1, 1, 2, 2, 4, 4};
  c.resblocks_per_level = 2;
  c.groupnorm_groups = 32;
  c.attention_resolutions = {16};
  c.image_size = 256;
  return c;
}

DenoiserConfig DenoiserConfig::desk(int n_conditions) {
  DenoiserConfig c;
  c.in_channels = n_conditions + 1;
  return c;
}

template <typename T>
UNet<T>::UNet(const DenoiserConfig& config) : config_(config) {
  config_.validate();
  const auto& mult = config_.channel_multipliers;
  const int levels = static_cast<int>(mult.size());
  const int base = config_.base_channels;
  const int groups = config_.groupnorm_groups;
  const auto sizes = config_.level_sizes();
  const std::set<int> attn_at(config_.attention_resolutions.begin(),
                              config_.attention_resolutions.end());

  if (config_.time_conditioning) {
    emb_dim_ = 4 * base;
    emb1_ = Linear<T>(layout_, "time.fc1", base, emb_dim_);
    emb2_ = Linear<T>(layout_, "time.fc2", emb_dim_, emb_dim_);
  }
  conv_in_ = Conv2d<T>(layout_, "conv_in", config_.in_channels, base, 3, 1, 1);

  int cur = base;
  enc_.resize(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    Stage& st = enc_[static_cast<std::size_t>(l)];
    st.size = sizes[static_cast<std::size_t>(l)];
    const int ch = base * mult[static_cast<std::size_t>(l)];
    for (int r = 0; r < config_.resblocks_per_level; ++r) {
      const std::string name = "enc." + std::to_string(l) + ".res." + std::to_string(r);
      st.blocks.emplace_back(layout_, name, cur, ch, groups, emb_dim_);
      cur = ch;
      if (attn_at.contains(st.size)) {
        st.attn.push_back(std::make_unique<SelfAttention<T>>(
            layout_, "enc." + std::to_string(l) + ".attn." + std::to_string(r), ch, groups));
      } else {
        st.attn.push_back(nullptr);
      }
    }
    if (l < levels - 1) down_.emplace_back(layout_, "down." + std::to_string(l), cur, cur, 3, 2, 1);
  }
  skip_channels_.clear();
  for (int l = 0; l < levels; ++l) skip_channels_.push_back(base * mult[static_cast<std::size_t>(l)]);

  mid_.emplace_back(layout_, "mid.res.0", cur, cur, groups, emb_dim_);
  mid_.emplace_back(layout_, "mid.res.1", cur, cur, groups, emb_dim_);

  dec_.resize(static_cast<std::size_t>(levels));
  up_.resize(static_cast<std::size_t>(std::max(0, levels - 1)));
  dec_in_channels_.assign(static_cast<std::size_t>(levels), 0);
  for (int l = levels - 1; l >= 0; --l) {
    if (l < levels - 1)
      up_[static_cast<std::size_t>(l)] =
          ConvTranspose2d<T>(layout_, "up." + std::to_string(l), cur, cur, 2, 2, 0);
    Stage& st = dec_[static_cast<std::size_t>(l)];
    st.size = sizes[static_cast<std::size_t>(l)];
    const int ch = base * mult[static_cast<std::size_t>(l)];
    dec_in_channels_[static_cast<std::size_t>(l)] = cur;
    int in = cur + ch;
    for (int r = 0; r < config_.resblocks_per_level; ++r) {
      const std::string name = "dec." + std::to_string(l) + ".res." + std::to_string(r);
      st.blocks.emplace_back(layout_, name, in, ch, groups, emb_dim_);
      in = ch;
      if (attn_at.contains(st.size)) {
        st.attn.push_back(std::make_unique<SelfAttention<T>>(
            layout_, "dec." + std::to_string(l) + ".attn." + std::to_string(r), ch, groups));
      } else {
        st.attn.push_back(nullptr);
      }
    }
    cur = ch;
  }
  out_norm_ = GroupNorm<T>(layout_, "out.norm", cur, groups);
  out_conv_ = Conv2d<T>(layout_, "out.conv", cur, config_.out_channels, 3, 1, 1);
}

template <typename T>
std::vector<T> UNet<T>::initialize(std::uint64_t seed) const {
  std::vector<T> p(layout_.total(), T(0));
  Rng rng(seed);
  if (config_.time_conditioning) {
    emb1_.init(p.data(), rng);
    emb2_.init(p.data(), rng);
  }
  conv_in_.init(p.data(), rng);
  for (std::size_t l = 0; l < enc_.size(); ++l) {
    for (std::size_t r = 0; r < enc_[l].blocks.size(); ++r) {
      enc_[l].blocks[r].init(p.data(), rng);
      if (enc_[l].attn[r]) enc_[l].attn[r]->init(p.data(), rng);
    }
    if (l < down_.size()) down_[l].init(p.data(), rng);
  }
  for (const auto& b : mid_) b.init(p.data(), rng);
  for (int l = static_cast<int>(dec_.size()) - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    if (li < up_.size()) up_[li].init(p.data(), rng);
    for (std::size_t r = 0; r < dec_[li].blocks.size(); ++r) {
      dec_[li].blocks[r].init(p.data(), rng);
      if (dec_[li].attn[r]) dec_[li].attn[r]->init(p.data(), rng);
    }
  }
  out_norm_.init(p.data());
  out_conv_.init(p.data(), rng, /*zero=*/true);
  return p;
}

template <typename T>
std::vector<int> UNet<T>::attention_sizes() const {
  std::vector<int> out;
  for (const auto& st : enc_)
    for (const auto& a : st.attn)
      if (a) out.push_back(st.size);
  for (const auto& st : dec_)
    for (const auto& a : st.attn)
      if (a) out.push_back(st.size);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

template <typename T>
int UNet<T>::deepest_size() const {
  return enc_.back().size;
}

template <typename T>
void UNet<T>::check(const Tensor<T>& t, const std::string& where) const {
  check_finite(t, where);
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& x, const std::vector<int>& timesteps,
                           std::span<const T> params_span, bool train) {
  if (x.c() != config_.in_channels)
    throw ConfigError("denoiser expects " + std::to_string(config_.in_channels) +
                      " input channels, got " + std::to_string(x.c()));
  if (params_span.size() != layout_.total())
    throw ConfigError("parameter buffer does not match the network layout");
  const int levels = static_cast<int>(enc_.size());
  const int factor = 1 << (levels - 1);
  if (x.h() % factor != 0 || x.w() % factor != 0)
    throw ShapeError("input spatial size must be divisible by " + std::to_string(factor));
  const T* params = params_span.data();

  const Tensor<T>* emb = nullptr;
  Tensor<T> emb_local;
  if (config_.time_conditioning) {
    if (timesteps.size() != static_cast<std::size_t>(x.n()))
      throw ShapeError("one timestep per sample required");
    Tensor<T> e = timestep_embedding<T>(timesteps, config_.base_channels);
    e = emb2_.forward(emb_act1_.forward(emb1_.forward(e, params, train), train), params, train);
    emb_local = emb_act2_.forward(e, train);
    emb = &emb_local;
  }

  Tensor<T> h = conv_in_.forward(x, params, train);
  std::vector<Tensor<T>> skips;
  for (int l = 0; l < levels; ++l) {
    Stage& st = enc_[static_cast<std::size_t>(l)];
    for (std::size_t r = 0; r < st.blocks.size(); ++r) {
      h = st.blocks[r].forward(h, emb, params, train);
      if (st.attn[r]) h = st.attn[r]->forward(h, params, train);
    }
    check(h, "encoder level " + std::to_string(l));
    skips.push_back(h);
    if (l < levels - 1) h = down_[static_cast<std::size_t>(l)].forward(h, params, train);
  }
  for (auto& b : mid_) h = b.forward(h, emb, params, train);
  check(h, "middle");
  for (int l = levels - 1; l >= 0; --l) {
    if (l < levels - 1) h = up_[static_cast<std::size_t>(l)].forward(h, params, train);
    h = concat_channels(h, skips[static_cast<std::size_t>(l)]);
    Stage& st = dec_[static_cast<std::size_t>(l)];
    for (std::size_t r = 0; r < st.blocks.size(); ++r) {
      h = st.blocks[r].forward(h, emb, params, train);
      if (st.attn[r]) h = st.attn[r]->forward(h, params, train);
    }
    check(h, "decoder level " + std::to_string(l));
  }
  Tensor<T> out =
      out_conv_.forward(out_act_.forward(out_norm_.forward(h, params, train), train), params, train);
  check(out, "output");
  if (train && emb) emb_act_ = emb_local;
  return out;
}

template <typename T>
Tensor<T> UNet<T>::backward(const Tensor<T>& d_out, std::span<const T> params_span,
                            std::span<T> grads_span) {
  if (grads_span.size() != layout_.total())
    throw ConfigError("gradient buffer does not match the network layout");
  const T* params = params_span.data();
  T* grads = grads_span.data();
  const int levels = static_cast<int>(enc_.size());

  Tensor<T> d_emb;
  Tensor<T>* d_emb_ptr = nullptr;
  if (config_.time_conditioning) {
    d_emb = Tensor<T>(emb_act_.shape());
    d_emb_ptr = &d_emb;
  }

  Tensor<T> d = out_norm_.backward(
      out_act_.backward(out_conv_.backward(d_out, params, grads)), params, grads);

  std::vector<Tensor<T>> d_skips(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    Stage& st = dec_[static_cast<std::size_t>(l)];
    for (int r = static_cast<int>(st.blocks.size()) - 1; r >= 0; --r) {
      const auto ri = static_cast<std::size_t>(r);
      if (st.attn[ri]) d = st.attn[ri]->backward(d, params, grads);
      d = st.blocks[ri].backward(d, d_emb_ptr, params, grads);
    }
    Tensor<T> d_h;
    split_channels(d, dec_in_channels_[static_cast<std::size_t>(l)], d_h,
                   d_skips[static_cast<std::size_t>(l)]);
    d = std::move(d_h);
    if (l < levels - 1) d = up_[static_cast<std::size_t>(l)].backward(d, params, grads);
  }
  for (int i = static_cast<int>(mid_.size()) - 1; i >= 0; --i)
    d = mid_[static_cast<std::size_t>(i)].backward(d, d_emb_ptr, params, grads);
  for (int l = levels - 1; l >= 0; --l) {
    const Tensor<T>& ds = d_skips[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] += ds.data()[i];
    Stage& st = enc_[static_cast<std::size_t>(l)];
    for (int r = static_cast<int>(st.blocks.size()) - 1; r >= 0; --r) {
      const auto ri = static_cast<std::size_t>(r);
      if (st.attn[ri]) d = st.attn[ri]->backward(d, params, grads);
      d = st.blocks[ri].backward(d, d_emb_ptr, params, grads);
    }
    if (l > 0) d = down_[static_cast<std::size_t>(l - 1)].backward(d, params, grads);
  }
  Tensor<T> dx = conv_in_.backward(d, params, grads);

  if (config_.time_conditioning) {
    Tensor<T> de = emb_act2_.backward(d_emb);
    de = emb1_.backward(emb_act1_.backward(emb2_.backward(de, params, grads)), params, grads);
  }
  return dx;
}

template class UNet<float>;
template class UNet<double>;

}  // namespace gresynth::nn
