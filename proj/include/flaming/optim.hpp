#pragma once

#include <cstddef>
#include <vector>

#include "flaming/tensor.hpp"

namespace flaming {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  // AdamW-style decay applied to the parameter instead of the gradient.
  bool decoupled = false;

  void validate() const;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;

  // Zeroed buffers mirroring `params`.
  static AdamState for_params(const std::vector<Tensor>& params);
};

// One bias-corrected Adam update of every parameter from its gradient buffer
// (absent buffers count as zero).
void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr, const AdamConfig& cfg);

struct ScheduleConfig {
  std::size_t epochs = 30;
  std::size_t warmup_epochs = 5;
  // First epoch of the linear decay; the peak is held from warmup_epochs up to here.
  std::size_t decay_start = 6;
  double lr_min = 1e-6;
  double lr_peak = 1e-4;

  void validate() const;
};

// Linear warmup lr_min -> lr_peak over [0, warmup_epochs], flat until
// decay_start, then linear to 0 at `epochs`. Defined for 0 <= epoch <= epochs.
double lr_at(std::size_t epoch, const ScheduleConfig& cfg);

}  // namespace flaming
