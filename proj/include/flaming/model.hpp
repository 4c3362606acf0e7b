#pragma once

#include <cstdint>
#include <vector>

#include "flaming/backbone.hpp"
#include "flaming/encoder.hpp"
#include "flaming/params.hpp"
#include "flaming/relation.hpp"
#include "flaming/synthdata.hpp"

namespace flaming {

struct ModelConfig {
  BackboneConfig backbone;
  EncoderConfig encoder;
  RelationConfig relation;
  std::uint64_t init_seed = 1;

  // Derives the dependent extents (grid, channels, tokens) from the primary
  // ones and validates the whole set; throws ConfigError.
  void resolve();
};

class FlamingModel {
 public:
  explicit FlamingModel(ModelConfig cfg);
  FlamingModel(const FlamingModel&) = delete;
  FlamingModel& operator=(const FlamingModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Backbone& backbone() const { return backbone_; }
  const ActorEncoder& encoder() const { return encoder_; }
  const RelationModule& relation() const { return relation_; }

  struct Output {
    Tensor features;  // [N*T, HW, C]
    EncoderOutput encoded;
    RelationOutput relation;
  };
  // frames [N*T, 3, H0, W0], clip-major.
  Output forward(const Tensor& frames) const;

 private:
  ModelConfig config_;
  ParamStore params_;
  Backbone backbone_;
  ActorEncoder encoder_;
  RelationModule relation_;
};

// Packs the chosen frames of a clip into channels-first layout, optionally
// mirrored along x and scaled by `brightness` (clamped to [0, 1]).
void pack_clip(const VideoSample& s, const std::vector<std::size_t>& indices, bool flip, double brightness,
               std::span<double> dst);

// [N*T, 3, H0, W0] batch from clips sampled at the given indices.
Tensor pack_batch(const std::vector<const VideoSample*>& clips, const std::vector<std::vector<std::size_t>>& indices,
                  const std::vector<bool>& flips, const std::vector<double>& brightness);

}  // namespace flaming
