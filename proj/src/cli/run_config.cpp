#include "gresynth/cli/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include "gresynth/config_json.hpp"
#include "gresynth/error.hpp"

namespace gresynth::cli {

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return (base / p).lexically_normal();
}

}  // namespace

void RunConfig::validate() const {
  if (phantom.n_subjects < 1) throw ConfigError("phantom.n_subjects must be positive");
  if (pipeline.test_subjects < 0) throw ConfigError("pipeline.test_subjects must be non-negative");
  for (int d : pipeline.preprocess.target_shape)
    if (d < 1) throw ConfigError("pipeline.target_shape entries must be positive");
  if (pipeline.preprocess.roi_dilation < 0) throw ConfigError("pipeline.roi_dilation must be non-negative");
  const int n = n_conditions();
  if (denoiser.in_channels != n + 1)
    throw ConfigError("denoiser.in_channels is " + std::to_string(denoiser.in_channels) +
                      " but channel set " + data::channel_set_name(pipeline.channel_set) +
                      " needs " + std::to_string(n + 1));
  const auto& ts = pipeline.preprocess.target_shape;
  if (ts[0] != denoiser.image_size || ts[1] != denoiser.image_size)
    throw ConfigError("denoiser.image_size must equal the in-plane target shape");
  denoiser.validate();
  train.validate();
  gan.validate();
  if (sample.batch_size < 1) throw ConfigError("sample.batch_size must be positive");
  if (evaluate.correction_m < 1) throw ConfigError("evaluate.correction_m must be positive");
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  require_known_keys(j,
                     {"paths", "phantom", "pipeline", "schedule", "denoiser", "train", "gan",
                      "sample", "evaluate", "biostats", "seeds"},
                     "config");
  RunConfig c;
  auto section = [&](const char* name) -> const json& {
    static const json empty = json::object();
    return j.contains(name) ? j.at(name) : empty;
  };

  const json& paths = section("paths");
  require_known_keys(paths, {"input_dir", "work_dir", "checkpoint_dir", "output_dir"}, "paths");
  for (auto [key, target] : {std::pair{"input_dir", &c.paths.input_dir},
                             std::pair{"work_dir", &c.paths.work_dir},
                             std::pair{"checkpoint_dir", &c.paths.checkpoint_dir},
                             std::pair{"output_dir", &c.paths.output_dir}}) {
    std::string s = target->string();
    read_key(paths, key, s, "paths");
    *target = resolve(base_dir, s);
  }

  const json& ph = section("phantom");
  require_known_keys(ph, {"n_subjects", "grid_size", "depth", "n_structures"}, "phantom");
  read_key(ph, "n_subjects", c.phantom.n_subjects, "phantom");
  read_key(ph, "grid_size", c.phantom.shape.grid_size, "phantom");
  read_key(ph, "depth", c.phantom.shape.depth, "phantom");
  read_key(ph, "n_structures", c.phantom.shape.n_structures, "phantom");

  const json& pl = section("pipeline");
  require_known_keys(pl, {"target_shape", "channel_set", "roi_dilation", "test_subjects"}, "pipeline");
  std::vector<int> shape(c.pipeline.preprocess.target_shape.begin(),
                         c.pipeline.preprocess.target_shape.end());
  read_key(pl, "target_shape", shape, "pipeline");
  if (shape.size() != 3) throw ConfigError("pipeline.target_shape needs three entries");
  c.pipeline.preprocess.target_shape = {shape[0], shape[1], shape[2]};
  if (pl.contains("channel_set")) {
    std::string name;
    read_key(pl, "channel_set", name, "pipeline");
    try {
      c.pipeline.channel_set = data::parse_channel_set(name);
    } catch (const Error& e) {
      throw ConfigError(std::string("pipeline.channel_set: ") + e.what());
    }
  }
  read_key(pl, "roi_dilation", c.pipeline.preprocess.roi_dilation, "pipeline");
  read_key(pl, "test_subjects", c.pipeline.test_subjects, "pipeline");

  c.schedule = schedule_from_json(section("schedule"));
  nn::DenoiserConfig base = nn::DenoiserConfig::desk(c.n_conditions());
  base.image_size = c.pipeline.preprocess.target_shape[0];
  c.denoiser = denoiser_from_json(section("denoiser"), base);
  c.train = train_from_json(section("train"));
  c.gan = gan_from_json(section("gan"));

  const json& sm = section("sample");
  require_known_keys(sm, {"batch_size", "use_ema", "subjects", "shuffle_conditions", "output_name",
                         "clip_x0", "eta"},
                     "sample");
  read_key(sm, "batch_size", c.sample.batch_size, "sample");
  read_key(sm, "use_ema", c.sample.use_ema, "sample");
  read_key(sm, "subjects", c.sample.subjects, "sample");
  read_key(sm, "shuffle_conditions", c.sample.shuffle_conditions, "sample");
  read_key(sm, "output_name", c.sample.output_name, "sample");
  read_key(sm, "clip_x0", c.sample.clip_x0, "sample");
  if (!(c.sample.clip_x0 >= 0.0)) throw ConfigError("sample.clip_x0 must be non-negative");
  read_key(sm, "eta", c.sample.eta, "sample");
  if (!(c.sample.eta >= 0.0 && c.sample.eta <= 1.0)) throw ConfigError("sample.eta must lie in [0, 1]");

  const json& ev = section("evaluate");
  require_known_keys(ev, {"correction_m", "plots", "methods"}, "evaluate");
  read_key(ev, "correction_m", c.evaluate.correction_m, "evaluate");
  read_key(ev, "plots", c.evaluate.plots, "evaluate");
  read_key(ev, "methods", c.evaluate.methods, "evaluate");

  const json& bs = section("biostats");
  require_known_keys(bs, {"gt_table", "gen_table"}, "biostats");
  for (auto [key, target] : {std::pair{"gt_table", &c.biostats.gt_table},
                             std::pair{"gen_table", &c.biostats.gen_table}}) {
    std::string s;
    read_key(bs, key, s, "biostats");
    *target = resolve(base_dir, s);
  }

  const json& sd = section("seeds");
  require_known_keys(sd, {"master", "training", "sampling"}, "seeds");
  read_key(sd, "master", c.seeds.master, "seeds");
  read_key(sd, "training", c.seeds.training, "seeds");
  read_key(sd, "sampling", c.seeds.sampling, "seeds");
  c.train.seed = c.seeds.training;

  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + file.string() + ": " + e.what());
  }
  return from_json(j, fs::absolute(file).parent_path());
}

json RunConfig::to_json() const {
  const auto& ts = pipeline.preprocess.target_shape;
  json tr = gresynth::to_json(train);
  tr.erase("seed");
  return {
      {"paths",
       {{"input_dir", paths.input_dir.string()},
        {"work_dir", paths.work_dir.string()},
        {"checkpoint_dir", paths.checkpoint_dir.string()},
        {"output_dir", paths.output_dir.string()}}},
      {"phantom",
       {{"n_subjects", phantom.n_subjects},
        {"grid_size", phantom.shape.grid_size},
        {"depth", phantom.shape.depth},
        {"n_structures", phantom.shape.n_structures}}},
      {"pipeline",
       {{"target_shape", {ts[0], ts[1], ts[2]}},
        {"channel_set", data::channel_set_name(pipeline.channel_set)},
        {"roi_dilation", pipeline.preprocess.roi_dilation},
        {"test_subjects", pipeline.test_subjects}}},
      {"schedule", gresynth::to_json(schedule)},
      {"denoiser", gresynth::to_json(denoiser)},
      {"train", tr},
      {"gan", gresynth::to_json(gan)},
      {"sample",
       {{"batch_size", sample.batch_size},
        {"use_ema", sample.use_ema},
        {"subjects", sample.subjects},
        {"shuffle_conditions", sample.shuffle_conditions},
        {"output_name", sample.output_name},
        {"clip_x0", sample.clip_x0},
        {"eta", sample.eta}}},
      {"evaluate",
       {{"correction_m", evaluate.correction_m},
        {"plots", evaluate.plots},
        {"methods", evaluate.methods}}},
      {"biostats",
       {{"gt_table", biostats.gt_table.string()}, {"gen_table", biostats.gen_table.string()}}},
      {"seeds",
       {{"master", seeds.master}, {"training", seeds.training}, {"sampling", seeds.sampling}}}};
}

int worker_count() {
  if (const char* env = std::getenv("GRESYNTH_WORKERS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1)
      throw ConfigError(std::string("GRESYNTH_WORKERS must be a positive integer, got '") + env + "'");
    return static_cast<int>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace gresynth::cli
