#pragma once
// Subcommands of the synth tool. Each reads everything it needs from the run
// configuration plus a few per-invocation overrides, and writes only below
// the configured directories.
//
// Layout:
//   input_dir/sub-XXX/{echo1..5,qsm,r2star,t1w,labels}.nii, input_dir/phantoms.jsonl
//   work_dir/slices/<sid>.npy, work_dir/manifest.jsonl
//   work_dir/reference/<sid>/{t1w_norm,labels,brain_mask}.nii
//   checkpoint_dir/<method>/{step_N,final}/, loss*.csv
//   output_dir/<name>/<sid>/{t1w_norm,t1w}.nii, output_dir/<name>/report/
//   output_dir/biostats/

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "gresynth/cli/run_config.hpp"
#include "gresynth/train/trainer.hpp"

namespace gresynth::cli {

struct CommandOptions {
  std::optional<std::uint64_t> seed;  // replaces the subcommand's seed
  std::string method = "diffusion";   // diffusion | unet-l1 | pix2pix
  fs::path checkpoint;                // train: resume from; sample: load from
};

const std::vector<std::string>& method_names();
std::unique_ptr<train::Method> make_method(const RunConfig& cfg, const std::string& method,
                                           std::uint64_t init_seed);

void cmd_phantom(const RunConfig& cfg, const CommandOptions& opts);
void cmd_preprocess(const RunConfig& cfg, const CommandOptions& opts);
train::TrainReport cmd_train(const RunConfig& cfg, const CommandOptions& opts);
void cmd_sample(const RunConfig& cfg, const CommandOptions& opts);
void cmd_evaluate(const RunConfig& cfg, const CommandOptions& opts);
void cmd_biostats(const RunConfig& cfg, const CommandOptions& opts);

/// Subject directory name for phantom index i.
std::string phantom_subject_id(int i);

}  // namespace gresynth::cli
