#pragma once
// Conditional U-Net noise predictor (and, with time conditioning disabled,
// the direct-regression generator used by the baselines).
//
// Encoder: conv_in, then per level `resblocks_per_level` residual blocks
// (self-attention after each block when the level's spatial size is listed
// in attention_resolutions) and a stride-2 conv between levels. Middle: two
// residual blocks. Decoder mirrors the encoder: per level a 2x2 stride-2
// transposed conv (except at the deepest level), concatenation with the
// encoder output of that level, residual blocks and attention. Output:
// GroupNorm, SiLU and a zero-initialized 3x3 conv to out_channels.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gresynth/nn/layers.hpp"
#include "gresynth/nn/parameters.hpp"
#include "gresynth/tensor.hpp"

namespace gresynth::nn {

struct DenoiserConfig {
  int in_channels = 8;
  int out_channels = 1;
  int base_channels = 32;
  std::vector<int> channel_multipliers{1, 2, 2, 4};
  int resblocks_per_level = 2;
  int groupnorm_groups = 32;
  std::vector<int> attention_resolutions{16};
  int image_size = 64;
  bool time_conditioning = true;

  /// Channel widths the network realizes, including decoder concatenations.
  std::vector<int> realized_widths() const;
  /// Spatial size at each level (image_size halved per level).
  std::vector<int> level_sizes() const;
  /// Throws ConfigError on any violated invariant.
  void validate() const;

  /// Full-scale architecture for n conditions: base 128, [1,1,2,2,4,4], 256 px.
  static DenoiserConfig full_scale(int n_conditions);
  /// Desk-scale preset: base 32, [1,2,2,4], 64 px, attention at 16.
  static DenoiserConfig desk(int n_conditions);

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

template <typename T>
class UNet {
 public:
  explicit UNet(const DenoiserConfig& config);

  const DenoiserConfig& config() const noexcept { return config_; }
  const ParameterLayout& layout() const noexcept { return layout_; }
  std::size_t parameter_count() const noexcept { return layout_.total(); }

  /// Deterministic initialization; the output conv is zero.
  std::vector<T> initialize(std::uint64_t seed) const;

  /// x: [n, in_channels, h, w]; timesteps: one virtual index per sample
  /// (ignored without time conditioning). Returns [n, out_channels, h, w].
  Tensor<T> forward(const Tensor<T>& x, const std::vector<int>& timesteps, std::span<const T> params,
                    bool train);
  /// Backpropagates d_out through the most recent train-mode forward,
  /// accumulating into grads. Returns the gradient w.r.t. the input.
  Tensor<T> backward(const Tensor<T>& d_out, std::span<const T> params, std::span<T> grads);

  /// Spatial sizes at which self-attention is applied in this instance.
  std::vector<int> attention_sizes() const;
  /// Smallest feature-map size reached by the encoder for image_size input.
  int deepest_size() const;

 private:
  struct Stage {
    std::vector<ResBlock<T>> blocks;
    std::vector<std::unique_ptr<SelfAttention<T>>> attn;
    int size = 0;
  };

  void check(const Tensor<T>& t, const std::string& where) const;

  DenoiserConfig config_;
  ParameterLayout layout_;
  int emb_dim_ = 0;

  Linear<T> emb1_, emb2_;
  SiLU<T> emb_act1_, emb_act2_;
  Conv2d<T> conv_in_;
  std::vector<Stage> enc_;
  std::vector<Conv2d<T>> down_;
  std::vector<ResBlock<T>> mid_;
  std::vector<Stage> dec_;  // indexed by level
  std::vector<ConvTranspose2d<T>> up_;  // up_[l] lifts level l+1 to level l
  GroupNorm<T> out_norm_;
  SiLU<T> out_act_;
  Conv2d<T> out_conv_;

  // Per-forward state for backward.
  Tensor<T> emb_act_;
  std::vector<int> skip_channels_;
  std::vector<int> dec_in_channels_;
};

/// Fresh weights for `net`: raw from initialize(seed), ema a copy, step 0.
template <typename T>
WeightState<T> build_denoiser(const UNet<T>& net, std::uint64_t seed) {
  WeightState<T> s;
  s.raw = net.initialize(seed);
  s.ema = s.raw;
  return s;
}

}  // namespace gresynth::nn
