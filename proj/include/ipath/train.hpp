#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "ipath/pathways.hpp"

namespace ipath {

struct StageSchedule {
  std::array<int, 3> epochs{30, 30, 60};
  double learning_rate = 5e-3;
  int batch_size = 128;
  // Cosine decay of the step size within each stage, from learning_rate down
  // to learning_rate * final_lr_ratio. Off when the ratio is 1.
  double final_lr_ratio = 0.01;

  /// Step size for update `step` of `steps` in a stage.
  double lr_at(std::int64_t step, std::int64_t steps) const;
  void validate() const;
  bool operator==(const StageSchedule&) const = default;
};

/// Adam moments aligned with Model::params().
struct AdamState {
  std::int64_t step = 0;
  std::vector<Mat> m;
  std::vector<Mat> v;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(nn::ParamList params, AdamState& state, double lr, const AdamOptions& opt = {});

struct EpochRecord {
  int stage = 0;
  int epoch = 0;
  PathwayLossValues losses;  // monitored on a fixed training subset
  double wall_time_s = 0.0;
};

struct TrainState {
  Model model;
  AdamState adam;
  int completed_stage = 0;  // 0 before training, 3 when done
  std::uint64_t seed = 0;
  std::vector<EpochRecord> history;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(const TrainState&)> on_stage_end;
  int monitor_traces = 512;
};

TrainState init_train_state(const ModelConfig& config, std::uint64_t seed);

/// Runs the remaining stages of `state` in order. Batch order is derived from
/// (seed, stage, epoch) so resuming from a stage checkpoint reproduces an
/// uninterrupted run. Throws DivergenceError on a non-finite loss.
void run_training(TrainState& state, const Dataset& ds, const StageSchedule& schedule, const AblationConfig& ablation,
                  const TrainHooks& hooks = {});

TrainState train(const Dataset& ds, const ModelConfig& config, const StageSchedule& schedule,
                 const AblationConfig& ablation, std::uint64_t seed, const TrainHooks& hooks = {});

/// Binary checkpoint: named parameter arrays with Adam moments, model config
/// JSON, completed-stage marker and seed. Round trip is bit-exact.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

/// Hash over parameter names, shapes and raw values.
std::string parameter_hash(const Model& model);

}  // namespace ipath
