#pragma once
#include <filesystem>
#include <random>
#include <string>

#include "gresynth/nn/unet.hpp"
#include "gresynth/tensor.hpp"

namespace testutil {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("gresynth_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Small network that trains in milliseconds.
inline gresynth::nn::DenoiserConfig tiny_config(int n_conditions, bool time = true) {
  gresynth::nn::DenoiserConfig c;
  c.in_channels = n_conditions + (time ? 1 : 0);
  c.base_channels = 8;
  c.channel_multipliers = {1, 2};
  c.resblocks_per_level = 1;
  c.groupnorm_groups = 4;
  c.attention_resolutions = {8};
  c.image_size = 16;
  c.time_conditioning = time;
  return c;
}

inline gresynth::Tensor<float> random_tensor(gresynth::Shape4 s, std::uint64_t seed, float lo = -1,
                                             float hi = 1) {
  gresynth::Tensor<float> t(s);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  return t;
}

}  // namespace testutil
