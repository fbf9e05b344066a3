#pragma once

#include "voxgan/adam.hpp"
#include "voxgan/config.hpp"
#include "voxgan/toy.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace voxgan {

/// Samples in network layout: targets are signed [1, N, N, N]; conditions are
/// [1, N, N, N] shells or [1, N, N] images, one per target (empty for iwgan).
struct TrainingSet {
  std::vector<Tensor> targets;
  std::vector<Tensor> conditions;

  std::size_t size() const { return targets.size(); }

  static TrainingSet unconditional(std::span<const VoxelGrid> grids);
  static TrainingSet shells(std::span<const CompletionPair> pairs);
  /// Conditions are silhouettes of each target rendered from the pair's view.
  static TrainingSet images(std::span<const CompletionPair> pairs);
};

/// [1, ...] samples -> [B, 1, ...] in the given order.
Tensor stack_samples(const std::vector<Tensor>& samples, std::span<const std::int64_t> indices);

struct TelemetryRow {
  std::int64_t step = 0;   // 1-based batch count
  std::int64_t epoch = 0;  // 0-based epoch the batch belongs to
  double d_loss = 0;
  std::optional<double> g_loss;
  double gp_term = 0;
  double grad_norm_mean = 0;
  std::optional<double> e_loss;
};

inline constexpr const char* kTelemetryHeader = "step,epoch,d_loss,g_loss,gp_term,grad_norm_mean,e_loss";
/// Header plus one line per row; absent losses are empty fields.
std::string telemetry_csv(std::span<const TelemetryRow> rows);

struct TrainState {
  RunConfig config;
  nn::Network generator;
  nn::Network discriminator;
  nn::Network encoder;  // layerless outside vae-iwgan mode
  Adam opt_generator;
  Adam opt_discriminator;
  Adam opt_encoder;

  std::int64_t step = 0;  // batches processed
  std::int64_t epoch = 0;  // completed epochs
  std::int64_t batch_in_epoch = 0;
  std::int64_t disc_steps = 0;
  std::int64_t gen_steps = 0;
  std::int64_t enc_steps = 0;
  std::vector<std::int64_t> order;  // current epoch's permutation
  std::vector<TelemetryRow> history;
  Rng rng;

  /// Mean discriminator loss of every epoch with at least one row.
  std::vector<double> epoch_disc_loss() const;
};

/// Fresh networks and optimizers; all randomness comes from config.train.seed.
TrainState init_state(const RunConfig& config);

class NumericGuard : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Drives one TrainState over a dataset. D learns every batch, E every batch
/// (vae-iwgan), G every gen_interval-th batch after D, on fresh z.
class Trainer {
 public:
  Trainer(TrainState& state, const TrainingSet& data);

  std::int64_t batches_per_epoch() const;
  /// One batch. Throws NumericGuard on a non-finite loss or gradient.
  void step();
  void run_batches(std::int64_t n);
  /// Trains until state.epoch == epochs; on_epoch runs after each completed epoch.
  void run_until_epoch(std::int64_t epochs, const std::function<void(const TrainState&)>& on_epoch = {});

 private:
  void begin_epoch();
  TelemetryRow step_gan(const std::vector<std::int64_t>& batch, bool gen_step);
  TelemetryRow step_vae(const std::vector<std::int64_t>& batch, bool gen_step);

  TrainState& s_;
  const TrainingSet& data_;
};

TrainState train_iwgan(const RunConfig& config, const TrainingSet& data);
TrainState train_vae_iwgan(const RunConfig& config, const TrainingSet& data);

std::string checkpoint_encode(const TrainState& state);
TrainState checkpoint_decode(const std::string& bytes);
void checkpoint_save(const TrainState& state, const std::filesystem::path& path);
TrainState checkpoint_load(const std::filesystem::path& path);

}  // namespace voxgan
