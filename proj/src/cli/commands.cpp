#include "gresynth/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>

#include "gresynth/baselines/baselines.hpp"
#include "gresynth/cli/worker_pool.hpp"
#include "gresynth/config_json.hpp"
#include "gresynth/error.hpp"
#include "gresynth/io/nifti.hpp"
#include "gresynth/io/npy.hpp"
#include "gresynth/log.hpp"

namespace gresynth::cli {

using nlohmann::json;

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"diffusion", "unet-l1", "pix2pix"};
  return names;
}

std::string phantom_subject_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub-%03d", i + 1);
  return buf;
}

namespace {

void require_method(const std::string& method) {
  const auto& m = method_names();
  if (std::find(m.begin(), m.end(), method) == m.end())
    throw ConfigError("unknown method '" + method + "' (diffusion, unet-l1, pix2pix)");
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path manifest_path(const RunConfig& cfg) { return cfg.paths.work_dir / "manifest.jsonl"; }
fs::path reference_dir(const RunConfig& cfg, const std::string& sid) {
  return cfg.paths.work_dir / "reference" / sid;
}

std::vector<data::ManifestEntry> subject_entries(const std::vector<data::ManifestEntry>& manifest,
                                                 const std::string& sid) {
  std::vector<data::ManifestEntry> out;
  for (const auto& e : manifest)
    if (e.subject_id == sid) out.push_back(e);
  if (out.empty()) throw DataError("subject " + sid + " is not in the manifest");
  return out;
}

}  // namespace

std::unique_ptr<train::Method> make_method(const RunConfig& cfg, const std::string& method,
                                           std::uint64_t init_seed) {
  require_method(method);
  std::unique_ptr<train::Method> m;
  if (method == "diffusion")
    m = std::make_unique<train::DiffusionMethod>(cfg.denoiser, cfg.schedule, cfg.train, init_seed);
  else if (method == "unet-l1")
    m = std::make_unique<baselines::UnetL1Method>(cfg.denoiser, cfg.train, init_seed);
  else
    m = std::make_unique<baselines::Pix2PixMethod>(cfg.denoiser, cfg.train, cfg.gan, init_seed);
  m->metadata = {{"channel_set", data::channel_set_name(cfg.pipeline.channel_set)},
                 {"n_conditions", cfg.n_conditions()},
                 {"target_shape", cfg.pipeline.preprocess.target_shape}};
  return m;
}

void cmd_phantom(const RunConfig& cfg, const CommandOptions& opts) {
  const std::uint64_t master = opts.seed.value_or(cfg.seeds.master);
  const int n = cfg.phantom.n_subjects;
  fs::create_directories(cfg.paths.input_dir);
  std::vector<json> rows(static_cast<std::size_t>(n));
  parallel_for(n, worker_count(), [&](int i) {
    const std::string sid = phantom_subject_id(i);
    const std::uint64_t seed = data::derive_seed(master, static_cast<std::uint64_t>(i));
    const data::Phantom p = data::generate_phantom(seed, cfg.phantom.shape);
    const fs::path dir = cfg.paths.input_dir / sid;
    data::write_phantom(dir, p);
    json files = json::object();
    for (const auto& f : data::phantom_file_names()) files[f] = data::file_crc32(dir / f);
    rows[static_cast<std::size_t>(i)] = {{"subject_id", sid}, {"seed", seed}, {"files", files}};
  });
  std::ofstream out(cfg.paths.input_dir / "phantoms.jsonl");
  if (!out) throw DataError("cannot write the phantom manifest in " + cfg.paths.input_dir.string());
  for (const auto& r : rows) out << r.dump() << '\n';
  info("wrote " + std::to_string(n) + " phantom subjects to " + cfg.paths.input_dir.string());
}

void cmd_preprocess(const RunConfig& cfg, const CommandOptions&) {
  if (!fs::is_directory(cfg.paths.input_dir))
    throw DataError("input directory " + cfg.paths.input_dir.string() + " does not exist");
  std::vector<std::string> subjects;
  for (const auto& e : fs::directory_iterator(cfg.paths.input_dir))
    if (e.is_directory() && fs::exists(e.path() / "echo1.nii"))
      subjects.push_back(e.path().filename().string());
  std::sort(subjects.begin(), subjects.end());
  const int n = static_cast<int>(subjects.size());
  if (n == 0) throw DataError("no subject directories in " + cfg.paths.input_dir.string());
  if (cfg.pipeline.test_subjects >= n)
    throw ConfigError("pipeline.test_subjects (" + std::to_string(cfg.pipeline.test_subjects) +
                      ") leaves no training subjects out of " + std::to_string(n));

  fs::create_directories(cfg.paths.work_dir / "slices");
  std::vector<std::vector<data::ManifestEntry>> rows(static_cast<std::size_t>(n));
  parallel_for(n, worker_count(), [&](int i) {
    const std::string& sid = subjects[static_cast<std::size_t>(i)];
    const auto s = data::preprocess_subject(cfg.paths.input_dir / sid, sid, cfg.pipeline.preprocess);
    const auto arr = data::subject_slice_array(s);
    const auto& t1 = s.channels.back();
    const std::string rel = "slices/" + sid + ".npy";
    io::write_npy(cfg.paths.work_dir / rel, std::span<const float>(arr),
                  {static_cast<std::size_t>(t1.nz), s.channels.size(),
                   static_cast<std::size_t>(t1.ny), static_cast<std::size_t>(t1.nx)});
    const fs::path ref = reference_dir(cfg, sid);
    fs::create_directories(ref);
    io::write_nifti(ref / "t1w_norm.nii", t1);
    io::write_nifti(ref / "labels.nii", s.labels);
    io::write_nifti(ref / "brain_mask.nii", s.brain_mask);

    const std::uint32_t crc = data::file_crc32(cfg.paths.work_dir / rel);
    const std::string split = i >= n - cfg.pipeline.test_subjects ? "test" : "train";
    for (int z = 0; z < t1.nz; ++z)
      rows[static_cast<std::size_t>(i)].push_back(
          {sid, z, split, rel, data::slice_channel_order(), s.norms, crc});
  });
  std::vector<data::ManifestEntry> manifest;
  for (auto& r : rows) manifest.insert(manifest.end(), r.begin(), r.end());
  data::write_manifest(manifest_path(cfg), manifest);
  info("preprocessed " + std::to_string(n) + " subjects into " + cfg.paths.work_dir.string());
}

train::TrainReport cmd_train(const RunConfig& cfg, const CommandOptions& opts) {
  require_method(opts.method);
  RunConfig run = cfg;
  if (opts.seed) run.train.seed = *opts.seed;
  const auto manifest = data::read_manifest(manifest_path(run));
  const data::SliceDataset ds = data::load_slices(run.paths.work_dir, manifest, "train", run.n_conditions());
  auto method = make_method(run, opts.method, data::derive_seed(run.train.seed, 0x1417));
  const fs::path out = run.paths.checkpoint_dir / opts.method;

  std::optional<train::Checkpoint> resumed;
  if (!opts.checkpoint.empty()) {
    resumed = train::read_checkpoint(opts.checkpoint);
    const std::string set = resumed->config.value("channel_set", std::string());
    if (set != data::channel_set_name(run.pipeline.channel_set))
      throw ConfigError("checkpoint was trained on channel set '" + set + "', config uses '" +
                        data::channel_set_name(run.pipeline.channel_set) + "'");
    method->restore(*resumed);
    if (method->step_count() > run.train.total_iterations)
      throw ConfigError("checkpoint is at step " + std::to_string(method->step_count()) +
                        ", beyond train.total_iterations");
  }
  fs::create_directories(out);
  write_json(out / "run_config.json", run.to_json());
  return train::run_training(*method, ds, run.train, out, resumed ? &*resumed : nullptr);
}

void cmd_sample(const RunConfig& cfg, const CommandOptions& opts) {
  require_method(opts.method);
  const std::uint64_t sampling_seed = opts.seed.value_or(cfg.seeds.sampling);
  const fs::path ck_dir =
      opts.checkpoint.empty() ? cfg.paths.checkpoint_dir / opts.method / "final" : opts.checkpoint;
  const train::Checkpoint ck = train::read_checkpoint(ck_dir);
  if (ck.config.value("kind", std::string()) != opts.method)
    throw ConfigError("checkpoint " + ck_dir.string() + " holds a '" +
                      ck.config.value("kind", std::string("?")) + "' model, not " + opts.method);
  const std::string set = ck.config.value("channel_set", std::string());
  if (set != data::channel_set_name(cfg.pipeline.channel_set))
    throw ConfigError("checkpoint was trained on channel set '" + set + "', config uses '" +
                      data::channel_set_name(cfg.pipeline.channel_set) + "'");
  const nn::DenoiserConfig net_cfg = denoiser_from_json(ck.config.at("denoiser"));
  const bool diffusion = opts.method == "diffusion";
  const diffusion::NoiseSchedule schedule = diffusion::build_schedule(
      diffusion ? schedule_from_json(ck.config.at("schedule")) : cfg.schedule);
  {
    nn::UNet<float> probe(net_cfg);
    train::require_congruent(ck, "model", probe.layout(), {"raw", "ema"});
  }
  const std::vector<float>& weights = ck.arrays.at(cfg.sample.use_ema ? "ema" : "raw");

  const auto manifest = data::read_manifest(manifest_path(cfg));
  std::vector<std::string> subjects =
      cfg.sample.subjects.empty() ? data::manifest_subjects(manifest, "test") : cfg.sample.subjects;
  if (subjects.empty()) throw DataError("no subjects to sample");
  const int n = static_cast<int>(subjects.size());
  const int n_cond = cfg.n_conditions();
  const std::string name = cfg.sample.output_name.empty() ? opts.method : cfg.sample.output_name;
  const fs::path out_root = cfg.paths.output_dir / name;
  fs::create_directories(out_root);

  parallel_for(n, worker_count(), [&](int i) {
    const std::string& sid = subjects[static_cast<std::size_t>(i)];
    const std::string& source =
        cfg.sample.shuffle_conditions ? subjects[static_cast<std::size_t>((i + 1) % n)] : sid;
    const auto target_entries = subject_entries(manifest, sid);
    const auto source_entries = subject_entries(manifest, source);
    const data::SliceDataset src = data::load_slices(cfg.paths.work_dir, source_entries, "", n_cond);
    if (src.conditions.c() != n_cond) throw DataError("missing condition channels for " + source);
    const data::Volume ref = io::read_nifti(reference_dir(cfg, sid) / "t1w_norm.nii");
    const data::Volume mask = io::read_nifti(reference_dir(cfg, source) / "brain_mask.nii");
    if (!ref.same_grid(mask) || ref.nz != src.size() || ref.ny != src.conditions.h() ||
        ref.nx != src.conditions.w())
      throw ShapeError("conditions of " + source + " do not fit the grid of " + sid);

    nn::UNet<float> net(net_cfg);
    const std::uint64_t subject_seed = data::derive_seed(sampling_seed, static_cast<std::uint64_t>(i));
    std::vector<data::Slice2D> slices;
    const int bs = cfg.sample.batch_size;
    const std::size_t plane = static_cast<std::size_t>(ref.nx) * ref.ny;
    for (int b0 = 0; b0 < src.size(); b0 += bs) {
      const int b = std::min(bs, src.size() - b0);
      Tensor<float> cond({b, n_cond, ref.ny, ref.nx});
      for (int k = 0; k < b; ++k)
        std::copy_n(src.conditions.sample(b0 + k), static_cast<std::size_t>(n_cond) * plane,
                    cond.sample(k));
      Tensor<float> out;
      if (diffusion) {
        const diffusion::NoisePredictor<float> predict = [&](const Tensor<float>& x, int t) {
          return net.forward(x, std::vector<int>(static_cast<std::size_t>(x.n()), t), weights, false);
        };
        out = diffusion::sample(cond, predict, schedule,
                                data::derive_seed(subject_seed, static_cast<std::uint64_t>(b0)),
                                cfg.sample.eta, cfg.sample.clip_x0);
      } else {
        out = net.forward(cond, {}, weights, false);
      }
      for (int k = 0; k < b; ++k) {
        data::Slice2D s{src.slice_indices[static_cast<std::size_t>(b0 + k)], ref.ny, ref.nx, {}};
        s.pixels.assign(out.sample(k), out.sample(k) + plane);
        const float* m = mask.data.data() + static_cast<std::size_t>(s.index) * plane;
        for (std::size_t p = 0; p < plane; ++p)
          s.pixels[p] = m[p] > 0.5f ? std::clamp(s.pixels[p], -1.0f, 1.0f) : -1.0f;
        slices.push_back(std::move(s));
      }
    }
    data::Volume gen = data::slices_to_volume(slices, ref.nz);
    gen.spacing = ref.spacing;
    gen.affine = ref.affine;
    gen.modality = data::Modality::T1w;
    const fs::path dir = out_root / sid;
    fs::create_directories(dir);
    io::write_nifti(dir / "t1w_norm.nii", gen);
    io::write_nifti(dir / "t1w.nii", data::denormalize(gen, target_entries.front().norms.at("t1w")));
    write_json(dir / "sample.json", {{"subject_id", sid},
                                     {"condition_source", source},
                                     {"method", opts.method},
                                     {"checkpoint", fs::absolute(ck_dir).lexically_normal().string()},
                                     {"weights", cfg.sample.use_ema ? "ema" : "raw"},
                                     {"seed", subject_seed}});
  });
  info("sampled " + std::to_string(n) + " subjects into " + out_root.string());
}

}  // namespace gresynth::cli
