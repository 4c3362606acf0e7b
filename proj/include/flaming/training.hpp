#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "flaming/evaluation.hpp"
#include "flaming/flowproc.hpp"
#include "flaming/losses.hpp"
#include "flaming/model.hpp"
#include "flaming/optim.hpp"

namespace flaming {

struct TrainConfig {
  ScheduleConfig schedule;
  AdamConfig adam;
  std::size_t batch = 4;  // N
  std::uint64_t seed = 1;
  bool flip = true;  // horizontal flip with label swap
  bool brightness = true;
  double brightness_lo = 0.8;
  double brightness_hi = 1.2;
  SamplingMode sampling = SamplingMode::Train;

  void validate() const;
};

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  LossBreakdown parts;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  std::optional<double> val_mca, val_mpca, val_merged_mca;
};

struct TrainOutputs {
  // When set: loss.csv, metrics.csv and checkpoint/ are written here.
  std::optional<std::filesystem::path> dir;
  const std::vector<VideoSample>* validation = nullptr;
  // Called after every step and epoch (progress reporting).
  std::function<void(const StepLog&)> on_step;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::vector<StepLog> steps;
};

// Precomputed guidance for every training clip on the encoder grid.
std::vector<FlowMap> precompute_flow(const std::vector<VideoSample>& samples, const FlowPrepConfig& cfg);

// Rows of `maps` at the sampled frames, optionally mirrored along x:
// [frames, gh * gw] appended to `dst`.
void gather_flow(const FlowMap& map, const std::vector<std::size_t>& indices, bool flip, std::vector<double>& dst);

// Trains `model` in place. Deterministic for a fixed TrainConfig::seed and model init.
TrainResult train(FlamingModel& model, const std::vector<VideoSample>& train_set, const TrainConfig& cfg,
                  const LossConfig& loss_cfg, const FlowPrepConfig& flow_cfg, const TrainOutputs& outputs = {});

// Mean total loss over `samples` with eval sampling and no augmentation;
// nothing is updated.
double dataset_loss(const FlamingModel& model, const std::vector<VideoSample>& samples, std::size_t batch,
                    const LossConfig& loss_cfg, const FlowPrepConfig& flow_cfg);

}  // namespace flaming
