#pragma once

#include <string>
#include <vector>

#include "flaming/params.hpp"
#include "flaming/tensor.hpp"

namespace flaming {

struct BackboneConfig {
  std::size_t in_height = 64;
  std::size_t in_width = 96;
  std::size_t in_channels = 3;
  // One 3x3 stride-2 pad-1 conv + ReLU per entry.
  std::vector<std::size_t> widths{16, 32, 64};
  // Width C after the 1x1 compression.
  std::size_t channels = 32;

  std::size_t grid_height() const { return in_height >> widths.size(); }
  std::size_t grid_width() const { return in_width >> widths.size(); }
  // Throws ConfigError unless both extents divide by 2^stages.
  void validate() const;
};

struct Backbone {
  BackboneConfig config;
  std::vector<Tensor> kernels;  // [out, in, 3, 3]
  std::vector<Tensor> biases;
  Tensor compress_w;  // [C0, C]
  Tensor compress_b;  // [C]
};

Backbone make_backbone(ParamStore& params, const std::string& prefix, const BackboneConfig& cfg, Rng& rng);

// Pre-compression maps after the last stage: [B, C0, H, W].
Tensor backbone_stages(const Backbone& net, const Tensor& frames);

// frames [B, 3, H0, W0] -> flattened features [B, H*W, C] (row-major grid).
Tensor extract_features(const Backbone& net, const Tensor& frames);

}  // namespace flaming
