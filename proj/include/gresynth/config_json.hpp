#pragma once
// JSON conversion for the configuration structs. Readers start from the
// given defaults, overwrite the keys present, and reject unknown keys or
// wrongly typed values with ConfigError.

#include <json.hpp>

#include "gresynth/diffusion.hpp"
#include "gresynth/nn/unet.hpp"
#include "gresynth/train/options.hpp"

namespace gresynth {

using json = nlohmann::json;

json to_json(const diffusion::ScheduleParams& p);
json to_json(const nn::DenoiserConfig& c);
json to_json(const train::TrainConfig& c);
json to_json(const train::GanConfig& c);

diffusion::ScheduleParams schedule_from_json(const json& j, diffusion::ScheduleParams base = {});
nn::DenoiserConfig denoiser_from_json(const json& j, nn::DenoiserConfig base = {});
train::TrainConfig train_from_json(const json& j, train::TrainConfig base = {});
train::GanConfig gan_from_json(const json& j, train::GanConfig base = {});

/// Throws ConfigError naming `where` if j has a key outside `allowed`.
void require_known_keys(const json& j, std::initializer_list<const char*> allowed,
                        const std::string& where);

/// Reads j[key] into out if present, mapping JSON type errors to ConfigError.
template <typename T>
void read_key(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace gresynth
