#pragma once
// A six-subject, 32 px pipeline that runs end to end in seconds.
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

namespace testutil {

inline nlohmann::json tiny_pipeline_json() {
  return {
      {"phantom", {{"n_subjects", 6}, {"grid_size", 32}, {"depth", 6}}},
      {"pipeline", {{"target_shape", {32, 32, 6}}, {"test_subjects", 2}}},
      {"schedule", {{"virtual_steps", 100}, {"sampled_steps", 10}}},
      {"denoiser",
       {{"base_channels", 8},
        {"channel_multipliers", {1, 2}},
        {"resblocks_per_level", 1},
        {"groupnorm_groups", 4},
        {"attention_resolutions", {16}}}},
      {"train",
       {{"learning_rate", 1e-3},
        {"batch_size", 2},
        {"total_iterations", 10},
        {"checkpoint_interval", 10},
        {"log_interval", 5}}},
      {"gan", {{"disc_channels", 8}, {"disc_layers", 2}}},
      {"sample", {{"batch_size", 8}}},
      {"evaluate", {{"plots", false}}},
      {"seeds", {{"master", 5}, {"training", 6}, {"sampling", 7}}},
  };
}

inline std::filesystem::path write_config(const std::filesystem::path& dir, const nlohmann::json& j,
                                          const std::string& name = "run.json") {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / name) << j.dump(2);
  return dir / name;
}

}  // namespace testutil
