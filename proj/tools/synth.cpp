// synth: phantom | preprocess | train | sample | evaluate | biostats
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>
#include <iostream>

#include "gresynth/cli/commands.hpp"
#include "gresynth/error.hpp"
#include "gresynth/log.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

}  // namespace

int main(int argc, char** argv) {
  using namespace gresynth;
  CLI::App app{"Multi-echo GRE to T1w synthesis: phantoms, preprocessing, training, sampling, evaluation"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_file;
  std::uint64_t seed = 0;
  cli::CommandOptions opts;
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages");

  struct Sub {
    const char* name;
    const char* help;
    bool method;
    bool checkpoint;
  };
  const Sub subs[] = {
      {"phantom", "Generate the phantom cohort", false, false},
      {"preprocess", "Pad, normalize, mask and slice every subject", false, false},
      {"train", "Train a method on the training split", true, true},
      {"sample", "Synthesize T1w volumes for the test split", true, true},
      {"evaluate", "Score synthesized volumes against the references", false, false},
      {"biostats", "Regression concordance between GT and generated measures", false, false},
  };
  std::map<std::string, CLI::App*> apps;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("-c,--config", config_file, "Run configuration (JSON)")->required();
    sub->add_option("--seed", seed, "Override the subcommand's seed");
    if (s.method)
      sub->add_option("-m,--method", opts.method, "diffusion | unet-l1 | pix2pix")
          ->check(CLI::IsMember(cli::method_names()));
    if (s.checkpoint)
      sub->add_option("--checkpoint", opts.checkpoint,
                      std::string(s.name) == "train" ? "Resume from this checkpoint directory"
                                                     : "Checkpoint directory (default <checkpoint_dir>/<method>/final)");
    apps[s.name] = sub;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;  // bad invocation counts as a configuration error
  }
  set_quiet(quiet);

  try {
    const cli::RunConfig cfg = cli::RunConfig::load(config_file);
    CLI::App* chosen = app.get_subcommands().front();
    if (chosen->count("--seed") > 0) opts.seed = seed;
    const std::string name = chosen->get_name();
    if (name == "phantom") cli::cmd_phantom(cfg, opts);
    else if (name == "preprocess") cli::cmd_preprocess(cfg, opts);
    else if (name == "train") cli::cmd_train(cfg, opts);
    else if (name == "sample") cli::cmd_sample(cfg, opts);
    else if (name == "evaluate") cli::cmd_evaluate(cfg, opts);
    else cli::cmd_biostats(cfg, opts);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
