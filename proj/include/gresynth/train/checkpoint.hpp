#pragma once
// Checkpoint directory:
//   config.json   run metadata plus the parameter index of every network
//   state.json    iteration counter and loss-tracker state
//   <name>.npy    one float32 vector per array (raw, ema, adam_m, adam_v,
//                 and disc_raw, disc_adam_m, disc_adam_v for pix2pix)

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gresynth/nn/parameters.hpp"

namespace gresynth::train {

struct Checkpoint {
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json state = nlohmann::json::object();
  /// Parameter index per network ("model", "disc").
  std::map<std::string, std::vector<nn::ParamEntry>> index;
  std::map<std::string, std::vector<float>> arrays;
};

void write_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& dir);

/// Throws ConfigError unless the stored index for `network` matches `layout`
/// and every listed array has layout.total() elements.
void require_congruent(const Checkpoint& ck, const std::string& network,
                       const nn::ParameterLayout& layout, const std::vector<std::string>& arrays);

}  // namespace gresynth::train
