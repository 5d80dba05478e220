#pragma once
// Noise-prediction training with antithetic timestep sampling, Adam and EMA,
// plus the method-agnostic loop that handles data order, logging,
// checkpointing and resume for every trainable method.
//
// Randomness is stateless: iteration i draws from a generator seeded by
// (seed, i), and epoch e visits the data in a permutation seeded by (seed, e).
// A run resumed from a checkpoint therefore replays the uninterrupted run.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gresynth/data/dataset.hpp"
#include "gresynth/diffusion.hpp"
#include "gresynth/nn/parameters.hpp"
#include "gresynth/nn/unet.hpp"
#include "gresynth/tensor.hpp"
#include "gresynth/train/checkpoint.hpp"
#include "gresynth/train/options.hpp"

namespace gresynth::train {

using Rng = std::mt19937_64;

/// First half uniform on {0..K-1}; second half the complements K-1-i, in order.
std::vector<int> antithetic_timesteps(int batch_size, int K, Rng& rng);

/// ema = decay * ema + (1 - decay) * raw. Throws DataError if the sets differ in size.
template <typename T>
void ema_update(nn::WeightState<T>& state, double decay);

struct AdamMoments {
  std::vector<float> m;
  std::vector<float> v;
  AdamMoments() = default;
  explicit AdamMoments(std::size_t n) : m(n, 0.0f), v(n, 0.0f) {}
};

/// Bias-corrected Adam step number t (1-based). Applies global-norm
/// clipping to grads first when cfg.grad_clip > 0.
void adam_step(std::span<float> params, std::span<float> grads, AdamMoments& moments, long long t,
               const TrainConfig& cfg);

/// Predicts noise for a batch: x_cat = [conditions..., x_t], one virtual timestep per sample.
using BatchPredictor =
    std::function<Tensor<float>(const Tensor<float>& x_cat, const std::vector<int>& timesteps)>;

struct DiffusionBatch {
  Tensor<float> x_cat;
  Tensor<float> eps;
  std::vector<int> positions;  // indices into tau
  std::vector<int> timesteps;  // virtual timesteps
};

/// Antithetic tau positions, i.i.d. standard normal eps, and the noised
/// targets concatenated after the conditions. Throws DataError when the
/// targets are missing or do not match the conditions.
DiffusionBatch draw_diffusion_batch(const Tensor<float>& conditions, const Tensor<float>& targets,
                                    const diffusion::NoiseSchedule& schedule, Rng& rng);
/// Mean over batch and pixels of (eps - predictor(x_cat, t))^2.
double training_loss(const BatchPredictor& predictor, const Tensor<float>& conditions,
                     const Tensor<float>& targets, const diffusion::NoiseSchedule& schedule,
                     Rng& rng);

Rng iteration_rng(std::uint64_t seed, long long iteration);

/// Epoch-shuffled sample order over a dataset of fixed size.
class BatchOrder {
 public:
  BatchOrder(int dataset_size, std::uint64_t seed);
  /// Dataset indices used by iteration `iteration` (0-based).
  std::vector<int> batch(long long iteration, int batch_size);

 private:
  const std::vector<int>& permutation(long long epoch);
  int size_;
  std::uint64_t seed_;
  long long cached_epoch_ = -1;
  std::vector<int> perm_;
};

/// Gathers samples `indices` of a dataset into batch tensors.
void gather_batch(const data::SliceDataset& ds, const std::vector<int>& indices,
                  Tensor<float>& conditions, Tensor<float>& targets);

/// Per-interval mean plus an exponentially smoothed loss.
struct LossTracker {
  static constexpr double kSmoothing = 0.98;
  double window_sum = 0.0;
  long long window_count = 0;
  double smoothed = 0.0;
  bool started = false;

  void add(double loss);
  /// Mean of the current window; resets the window.
  double flush();
  nlohmann::json to_json() const;
  static LossTracker from_json(const nlohmann::json& j);
};

struct LossRecord {
  long long iteration = 0;
  double loss = 0.0;
  double ema_loss = 0.0;
};
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& rows);
std::vector<LossRecord> read_loss_csv(const std::filesystem::path& path);

struct StepResult {
  double loss = 0.0;
  /// Secondary losses logged to loss_<name>.csv.
  std::vector<std::pair<std::string, double>> extra;
};

/// A trainable method: owns its networks, weights and optimizer state.
class Method {
 public:
  virtual ~Method() = default;
  virtual std::string kind() const = 0;
  virtual StepResult step(const Tensor<float>& conditions, const Tensor<float>& targets,
                          Rng& rng) = 0;
  virtual long long step_count() const = 0;
  /// Full state; `metadata` is merged into the checkpoint config.
  virtual Checkpoint checkpoint() const = 0;
  /// Restores state saved by checkpoint(); validates shape congruence.
  virtual void restore(const Checkpoint& ck) = 0;
  /// Exponentially averaged weights used at inference.
  virtual const std::vector<float>& ema_weights() const = 0;

  nlohmann::json metadata = nlohmann::json::object();
};

class DiffusionMethod final : public Method {
 public:
  DiffusionMethod(const nn::DenoiserConfig& model, const diffusion::ScheduleParams& schedule,
                  const TrainConfig& cfg, std::uint64_t init_seed);

  std::string kind() const override { return "diffusion"; }
  StepResult step(const Tensor<float>& conditions, const Tensor<float>& targets,
                  Rng& rng) override;
  long long step_count() const override { return state_.step; }
  Checkpoint checkpoint() const override;
  void restore(const Checkpoint& ck) override;
  const std::vector<float>& ema_weights() const override { return state_.ema; }

  nn::UNet<float>& net() noexcept { return net_; }
  nn::WeightState<float>& state() noexcept { return state_; }
  const diffusion::NoiseSchedule& schedule() const noexcept { return schedule_; }

 private:
  nn::UNet<float> net_;
  diffusion::ScheduleParams schedule_params_;
  diffusion::NoiseSchedule schedule_;
  TrainConfig cfg_;
  nn::WeightState<float> state_;
  AdamMoments adam_;
  std::vector<float> grads_;
};

struct TrainReport {
  std::vector<LossRecord> history;
  std::vector<std::filesystem::path> checkpoints;
};

/// Runs `method` from its current step to cfg.total_iterations. Writes
/// step_<N>/ every checkpoint_interval iterations and final/ at the end,
/// plus loss.csv (iteration, loss, ema_loss) every log_interval iterations.
/// When the method was restored from a checkpoint, pass that checkpoint so
/// loss tracking continues exactly. A non-finite loss writes diagnostic/
/// and throws NumericError.
TrainReport run_training(Method& method, const data::SliceDataset& dataset, const TrainConfig& cfg,
                         const std::filesystem::path& out_dir,
                         const Checkpoint* resumed_from = nullptr);

}  // namespace gresynth::train
