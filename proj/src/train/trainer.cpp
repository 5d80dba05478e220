#include "gresynth/train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gresynth/config_json.hpp"
#include "gresynth/error.hpp"
#include "gresynth/kernels.hpp"
#include "gresynth/log.hpp"

namespace gresynth::train {

using nlohmann::json;

std::vector<int> antithetic_timesteps(int batch_size, int K, Rng& rng) {
  if (batch_size < 2 || batch_size % 2 != 0)
    throw ParameterError("antithetic sampling needs an even batch size, got " +
                         std::to_string(batch_size));
  if (K < 1) throw ParameterError("K must be positive");
  std::uniform_int_distribution<int> pick(0, K - 1);
  const int half = batch_size / 2;
  std::vector<int> out(static_cast<std::size_t>(batch_size));
  for (int j = 0; j < half; ++j) out[static_cast<std::size_t>(j)] = pick(rng);
  for (int j = 0; j < half; ++j)
    out[static_cast<std::size_t>(half + j)] = K - 1 - out[static_cast<std::size_t>(j)];
  return out;
}

template <typename T>
void ema_update(nn::WeightState<T>& state, double decay) {
  if (!state.congruent())
    throw DataError("weight state corrupted: raw has " + std::to_string(state.raw.size()) +
                    " values, ema " + std::to_string(state.ema.size()));
  kernels::ema_update(decay, std::span<T>(state.ema), std::span<const T>(state.raw));
}

template void ema_update<float>(nn::WeightState<float>&, double);
template void ema_update<double>(nn::WeightState<double>&, double);

void adam_step(std::span<float> params, std::span<float> grads, AdamMoments& moments, long long t,
               const TrainConfig& cfg) {
  if (grads.size() != params.size() || moments.m.size() != params.size() ||
      moments.v.size() != params.size())
    throw DataError("optimizer state does not match the parameter count");
  if (t < 1) throw ParameterError("Adam step numbers start at 1");
  if (cfg.grad_clip > 0.0) {
    const double norm = std::sqrt(kernels::dot(std::span<const float>(grads), std::span<const float>(grads)));
    if (norm > cfg.grad_clip) {
      const auto scale = static_cast<float>(cfg.grad_clip / norm);
      for (float& g : grads) g *= scale;
    }
  }
  const double td = static_cast<double>(t);
  kernels::AdamStep s{cfg.learning_rate / (1.0 - std::pow(cfg.adam_beta1, td)), cfg.adam_beta1,
                      cfg.adam_beta2, 1.0 / (1.0 - std::pow(cfg.adam_beta2, td)), cfg.adam_eps};
  kernels::adam_update(s, params, std::span<const float>(grads), std::span<float>(moments.m),
                       std::span<float>(moments.v));
}

DiffusionBatch draw_diffusion_batch(const Tensor<float>& conditions, const Tensor<float>& targets,
                                    const diffusion::NoiseSchedule& schedule, Rng& rng) {
  if (targets.empty()) throw DataError("training batch has no target channel");
  if (targets.c() != 1 || targets.n() != conditions.n() || targets.h() != conditions.h() ||
      targets.w() != conditions.w())
    throw DataError("targets " + targets.shape().str() + " do not match conditions " +
                    conditions.shape().str());
  DiffusionBatch b;
  b.positions = antithetic_timesteps(targets.n(), schedule.size(), rng);
  for (int p : b.positions) b.timesteps.push_back(schedule.tau_at(p));
  b.eps = Tensor<float>(targets.shape());
  diffusion::fill_normal(b.eps, rng);
  const Tensor<float> x_t =
      diffusion::forward_diffuse(targets, b.eps, std::span<const int>(b.timesteps), schedule);
  b.x_cat = concat_channels(conditions, x_t);
  return b;
}

namespace {

double mse(const Tensor<float>& a, const Tensor<float>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

}  // namespace

double training_loss(const BatchPredictor& predictor, const Tensor<float>& conditions,
                     const Tensor<float>& targets, const diffusion::NoiseSchedule& schedule,
                     Rng& rng) {
  const DiffusionBatch b = draw_diffusion_batch(conditions, targets, schedule, rng);
  const Tensor<float> pred = predictor(b.x_cat, b.timesteps);
  if (pred.shape() != b.eps.shape())
    throw ConfigError("predictor returned " + pred.shape().str() + ", expected " +
                      b.eps.shape().str());
  return mse(pred, b.eps);
}

Rng iteration_rng(std::uint64_t seed, long long iteration) {
  const auto it = static_cast<std::uint64_t>(iteration);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(it), static_cast<std::uint32_t>(it >> 32), 0x697472u};
  return Rng(seq);
}

BatchOrder::BatchOrder(int dataset_size, std::uint64_t seed) : size_(dataset_size), seed_(seed) {
  if (dataset_size < 1) throw DataError("empty training set");
}

const std::vector<int>& BatchOrder::permutation(long long epoch) {
  if (epoch != cached_epoch_) {
    perm_.resize(static_cast<std::size_t>(size_));
    std::iota(perm_.begin(), perm_.end(), 0);
    const auto e = static_cast<std::uint64_t>(epoch);
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(e >> 32), 0x65706fu};
    Rng rng(seq);
    // Fisher-Yates with an explicit draw so the order is portable across standard libraries.
    for (int i = size_ - 1; i > 0; --i) {
      const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(perm_[static_cast<std::size_t>(i)], perm_[static_cast<std::size_t>(j)]);
    }
    cached_epoch_ = epoch;
  }
  return perm_;
}

std::vector<int> BatchOrder::batch(long long iteration, int batch_size) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) {
    const long long k = iteration * batch_size + b;
    const auto& perm = permutation(k / size_);
    out.push_back(perm[static_cast<std::size_t>(k % size_)]);
  }
  return out;
}

void gather_batch(const data::SliceDataset& ds, const std::vector<int>& indices,
                  Tensor<float>& conditions, Tensor<float>& targets) {
  const auto b = static_cast<int>(indices.size());
  const Shape4 cs{b, ds.conditions.c(), ds.conditions.h(), ds.conditions.w()};
  const Shape4 ts{b, 1, ds.targets.h(), ds.targets.w()};
  if (conditions.shape() != cs) conditions = Tensor<float>(cs);
  if (targets.shape() != ts) targets = Tensor<float>(ts);
  const std::size_t cn = static_cast<std::size_t>(cs.c) * cs.plane();
  const std::size_t tn = ts.plane();
  for (int i = 0; i < b; ++i) {
    const int src = indices[static_cast<std::size_t>(i)];
    std::copy_n(ds.conditions.sample(src), cn, conditions.sample(i));
    std::copy_n(ds.targets.sample(src), tn, targets.sample(i));
  }
}

void LossTracker::add(double loss) {
  window_sum += loss;
  ++window_count;
  smoothed = started ? kSmoothing * smoothed + (1.0 - kSmoothing) * loss : loss;
  started = true;
}

double LossTracker::flush() {
  const double mean = window_count > 0 ? window_sum / static_cast<double>(window_count) : 0.0;
  window_sum = 0.0;
  window_count = 0;
  return mean;
}

json LossTracker::to_json() const {
  return {{"window_sum", window_sum},
          {"window_count", window_count},
          {"smoothed", smoothed},
          {"started", started}};
}

LossTracker LossTracker::from_json(const json& j) {
  LossTracker t;
  t.window_sum = j.at("window_sum").get<double>();
  t.window_count = j.at("window_count").get<long long>();
  t.smoothed = j.at("smoothed").get<double>();
  t.started = j.at("started").get<bool>();
  return t;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "iteration,loss,ema_loss\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%.10g,%.10g\n", r.iteration, r.loss, r.ema_loss);
    out << buf;
  }
}

std::vector<LossRecord> read_loss_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<LossRecord> rows;
  std::string line;
  std::getline(in, line);
  if (line != "iteration,loss,ema_loss") throw DataError("unexpected loss CSV header in " + path.string());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    LossRecord r;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf", &r.iteration, &r.loss, &r.ema_loss) != 3)
      throw DataError("malformed loss CSV row: " + line);
    rows.push_back(r);
  }
  return rows;
}

DiffusionMethod::DiffusionMethod(const nn::DenoiserConfig& model,
                                 const diffusion::ScheduleParams& schedule,
                                 const TrainConfig& cfg, std::uint64_t init_seed)
    : net_(model),
      schedule_params_(schedule),
      schedule_(diffusion::build_schedule(schedule)),
      cfg_(cfg) {
  cfg_.validate();
  if (!model.time_conditioning) throw ConfigError("the diffusion denoiser needs time conditioning");
  state_ = nn::build_denoiser(net_, init_seed);
  adam_ = AdamMoments(net_.parameter_count());
  grads_.assign(net_.parameter_count(), 0.0f);
}

StepResult DiffusionMethod::step(const Tensor<float>& conditions, const Tensor<float>& targets,
                                 Rng& rng) {
  if (conditions.c() + 1 != net_.config().in_channels)
    throw ConfigError("denoiser expects " + std::to_string(net_.config().in_channels - 1) +
                      " condition channels, batch has " + std::to_string(conditions.c()));
  const DiffusionBatch b = draw_diffusion_batch(conditions, targets, schedule_, rng);
  const Tensor<float> pred = net_.forward(b.x_cat, b.timesteps, state_.raw, true);
  const double loss = mse(pred, b.eps);
  if (!std::isfinite(loss)) return {loss, {}};

  Tensor<float> d(pred.shape());
  const auto scale = static_cast<float>(2.0 / static_cast<double>(pred.size()));
  for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] = scale * (pred.data()[i] - b.eps.data()[i]);
  std::fill(grads_.begin(), grads_.end(), 0.0f);
  net_.backward(d, state_.raw, grads_);
  ++state_.step;
  adam_step(state_.raw, grads_, adam_, state_.step, cfg_);
  ema_update(state_, cfg_.ema_decay);
  return {loss, {}};
}

Checkpoint DiffusionMethod::checkpoint() const {
  Checkpoint ck;
  ck.config = metadata;
  ck.config["kind"] = kind();
  ck.config["denoiser"] = to_json(net_.config());
  ck.config["schedule"] = to_json(schedule_params_);
  ck.config["train"] = to_json(cfg_);
  ck.state["step"] = state_.step;
  ck.index["model"] = net_.layout().entries();
  ck.arrays["raw"] = state_.raw;
  ck.arrays["ema"] = state_.ema;
  ck.arrays["adam_m"] = adam_.m;
  ck.arrays["adam_v"] = adam_.v;
  return ck;
}

void DiffusionMethod::restore(const Checkpoint& ck) {
  if (ck.config.value("kind", std::string()) != kind())
    throw ConfigError("checkpoint holds a '" + ck.config.value("kind", std::string("?")) +
                      "' model, not " + kind());
  require_congruent(ck, "model", net_.layout(), {"raw", "ema", "adam_m", "adam_v"});
  state_.raw = ck.arrays.at("raw");
  state_.ema = ck.arrays.at("ema");
  adam_.m = ck.arrays.at("adam_m");
  adam_.v = ck.arrays.at("adam_v");
  state_.step = ck.state.at("step").get<long long>();
}

namespace {

json history_json(const std::vector<LossRecord>& rows) {
  json a = json::array();
  for (const auto& r : rows) a.push_back({r.iteration, r.loss, r.ema_loss});
  return a;
}

std::vector<LossRecord> history_from_json(const json& a) {
  std::vector<LossRecord> rows;
  for (const auto& r : a)
    rows.push_back({r.at(0).get<long long>(), r.at(1).get<double>(), r.at(2).get<double>()});
  return rows;
}

std::string csv_name(const std::string& stream) {
  return stream == "loss" ? "loss.csv" : "loss_" + stream + ".csv";
}

char* step_dir_name(char* buf, std::size_t n, long long step) {
  std::snprintf(buf, n, "step_%08lld", step);
  return buf;
}

}  // namespace

TrainReport run_training(Method& method, const data::SliceDataset& dataset, const TrainConfig& cfg,
                         const std::filesystem::path& out_dir, const Checkpoint* resumed_from) {
  cfg.validate();
  if (dataset.size() < 1) throw DataError("training set is empty");
  if (dataset.targets.empty()) throw DataError("training set has no targets");
  std::filesystem::create_directories(out_dir);

  std::map<std::string, LossTracker> trackers;
  std::map<std::string, std::vector<LossRecord>> history;
  if (resumed_from) {
    try {
      const json& st = resumed_from->state;
      if (st.contains("trackers"))
        for (const auto& [k, v] : st.at("trackers").items()) trackers[k] = LossTracker::from_json(v);
      if (st.contains("history"))
        for (const auto& [k, v] : st.at("history").items()) history[k] = history_from_json(v);
    } catch (const json::exception& e) {
      throw DataError(std::string("malformed checkpoint state: ") + e.what());
    }
  }

  auto snapshot = [&]() {
    Checkpoint ck = method.checkpoint();
    json t = json::object(), h = json::object();
    for (const auto& [k, v] : trackers) t[k] = v.to_json();
    for (const auto& [k, v] : history) h[k] = history_json(v);
    ck.state["trackers"] = t;
    ck.state["history"] = h;
    return ck;
  };
  auto write_csvs = [&]() {
    for (const auto& [k, v] : history) write_loss_csv(out_dir / csv_name(k), v);
  };

  TrainReport report;
  BatchOrder order(dataset.size(), cfg.seed);
  Tensor<float> cond, tgt;
  char name[64];
  for (long long it = method.step_count(); it < cfg.total_iterations; ++it) {
    gather_batch(dataset, order.batch(it, cfg.batch_size), cond, tgt);
    Rng rng = iteration_rng(cfg.seed, it);
    StepResult r;
    try {
      r = method.step(cond, tgt, rng);
    } catch (const NumericError&) {
      write_checkpoint(out_dir / "diagnostic", snapshot());
      throw;
    }
    if (!std::isfinite(r.loss)) {
      write_checkpoint(out_dir / "diagnostic", snapshot());
      throw NumericError("non-finite training loss at iteration " + std::to_string(it + 1) +
                         "; diagnostic checkpoint written to " + (out_dir / "diagnostic").string());
    }
    trackers["loss"].add(r.loss);
    for (const auto& [k, v] : r.extra) trackers[k].add(v);

    const long long done = it + 1;
    if (done % cfg.log_interval == 0) {
      for (auto& [k, t] : trackers) history[k].push_back({done, t.flush(), t.smoothed});
      write_csvs();
      info(method.kind() + " iteration " + std::to_string(done) + " loss " +
           std::to_string(history["loss"].back().loss));
    }
    if (done % cfg.checkpoint_interval == 0) {
      const auto dir = out_dir / step_dir_name(name, sizeof name, done);
      write_checkpoint(dir, snapshot());
      report.checkpoints.push_back(dir);
    }
  }
  write_checkpoint(out_dir / "final", snapshot());
  report.checkpoints.push_back(out_dir / "final");
  write_csvs();
  if (!history.contains("loss")) write_loss_csv(out_dir / "loss.csv", {});
  report.history = history["loss"];
  return report;
}

}  // namespace gresynth::train
