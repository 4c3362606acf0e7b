#pragma once

#include <optional>
#include <vector>

#include "flaming/metrics.hpp"
#include "flaming/model.hpp"
#include "flaming/synthdata.hpp"

namespace flaming {

// Inference path. Lives in flaming_core, which does not link flowproc: the
// flow modality of a sample is never read here.

struct EvalOptions {
  std::size_t batch = 4;
  // Tokens averaged into the representative attention for localization.
  std::size_t k_flm = 6;
  bool localization = true;
};

struct EvalReport {
  ConfusionMatrix confusion{class_names()};
  std::vector<std::size_t> predictions;
  // Mean attention mass on key-actor cells; absent when disabled or when the
  // build carries no evaluation tracks.
  std::optional<double> localization;
};

// Eval-mode (segment-center) sampling, no augmentation, fused-logit argmax.
EvalReport evaluate(const FlamingModel& model, const std::vector<VideoSample>& samples, const EvalOptions& opts = {});

struct ClipAttention {
  std::vector<std::vector<std::vector<double>>> blocks;  // [L][T][cells] representative maps
  std::vector<std::vector<std::vector<double>>> tokens;  // [K][T][cells] per-token maps, last block
};

// Attention maps of one clip under eval sampling.
ClipAttention clip_attention(const FlamingModel& model, const VideoSample& s, std::size_t k_flm);

#ifndef FLAMING_NO_EVAL_TRACKS
// Key-actor masks on the feature grid for the given frames: a cell is set when
// any key-actor pixel falls inside it. frames x (gh * gw).
std::vector<double> key_actor_grid_masks(const VideoSample& s, const std::vector<std::size_t>& indices,
                                         std::size_t grid_height, std::size_t grid_width);
#endif

}  // namespace flaming
