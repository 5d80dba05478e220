#pragma once
// Run configuration: one JSON file per experiment. Relative paths resolve
// against the directory holding the file. Missing sections take defaults;
// unknown keys are configuration errors.
//
// {
//   "paths":     {"input_dir", "work_dir", "checkpoint_dir", "output_dir"},
//   "phantom":   {"n_subjects", "grid_size", "depth", "n_structures"},
//   "pipeline":  {"target_shape": [x, y, z], "channel_set", "roi_dilation", "test_subjects"},
//   "schedule":  {...}, "denoiser": {...}, "train": {...}, "gan": {...},
//   "sample":    {"batch_size", "use_ema", "subjects", "shuffle_conditions", "output_name",
//                "clip_x0", "eta"},
//   "evaluate":  {"correction_m", "plots", "methods"},
//   "biostats":  {"gt_table", "gen_table"},
//   "seeds":     {"master", "training", "sampling"}
// }

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gresynth/data/dataset.hpp"
#include "gresynth/data/phantom.hpp"
#include "gresynth/diffusion.hpp"
#include "gresynth/nn/unet.hpp"
#include "gresynth/train/options.hpp"

namespace gresynth::cli {

namespace fs = std::filesystem;

struct Paths {
  fs::path input_dir = "phantoms";
  fs::path work_dir = "work";
  fs::path checkpoint_dir = "checkpoints";
  fs::path output_dir = "output";
};

struct PhantomOptions {
  int n_subjects = 40;
  data::PhantomConfig shape;
};

struct PipelineOptions {
  data::PreprocessOptions preprocess;
  data::ChannelSet channel_set = data::ChannelSet::Mgre5QsmR2star;
  int test_subjects = 8;
};

struct SampleOptions {
  int batch_size = 16;
  bool use_ema = true;
  std::vector<std::string> subjects;  // empty: the test split
  /// Condition each subject on another subject's inputs (rotation over the
  /// sampled subjects); a control for input dependence.
  bool shuffle_conditions = false;
  /// Output directory name under output_dir; empty means the method name.
  std::string output_name;
  /// Bound on the x0 estimate during reverse diffusion (the normalized data
  /// range); 0 leaves the estimate unclamped.
  double clip_x0 = 1.0;
  /// Stochasticity of the reverse step; 0 is the deterministic sampler.
  double eta = 0.0;
};

struct EvaluateOptions {
  int correction_m = 20;
  bool plots = true;
  std::vector<std::string> methods{"diffusion"};
};

struct BiostatsOptions {
  fs::path gt_table;
  fs::path gen_table;
};

struct Seeds {
  std::uint64_t master = 42;
  std::uint64_t training = 1;
  std::uint64_t sampling = 7;
};

struct RunConfig {
  Paths paths;
  PhantomOptions phantom;
  PipelineOptions pipeline;
  diffusion::ScheduleParams schedule;
  nn::DenoiserConfig denoiser;
  train::TrainConfig train;
  train::GanConfig gan;
  SampleOptions sample;
  EvaluateOptions evaluate;
  BiostatsOptions biostats;
  Seeds seeds;

  int n_conditions() const { return data::condition_channels(pipeline.channel_set); }
  /// Throws ConfigError on any inconsistency (denoiser input width vs channel set, etc.).
  void validate() const;

  /// Parses a config document; `base_dir` anchors relative paths.
  static RunConfig from_json(const nlohmann::json& j, const fs::path& base_dir);
  static RunConfig load(const fs::path& file);
  nlohmann::json to_json() const;
};

/// Worker count for subject-level parallelism: GRESYNTH_WORKERS or the hardware concurrency.
int worker_count();

}  // namespace gresynth::cli
