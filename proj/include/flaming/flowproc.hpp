#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "flaming/synthdata.hpp"

// Flow magnitude -> attention-grid guidance maps m.
namespace flaming {

// The ceil(q * P)-th smallest of P values (1-based rank).
double nearest_rank_quantile(std::span<const double> values, double q);

// Subtract the q-quantile, clamp at zero, divide by the max when positive.
std::vector<double> quantile_suppress_normalize(std::span<const double> raw, double q);

// Block means; h0 % h == 0 and w0 % w == 0 or ConfigError.
std::vector<double> downsample_area(std::span<const double> frame, std::size_t h0, std::size_t w0, std::size_t h,
                                    std::size_t w);

// frames: T x h0 x w0 x 3. L2 norm of consecutive RGB differences, the last
// frame repeating the previous map.
std::vector<double> frame_difference_flow(std::span<const float> frames, std::size_t t, std::size_t h0,
                                          std::size_t w0);

struct FlowMap {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // frames x height*width, each in [0, 1]

  std::span<const double> frame(std::size_t t) const {
    return std::span<const double>(values).subspan(t * height * width, height * width);
  }
};

struct FlowPrepConfig {
  double quantile = 0.85;
  std::size_t grid_height = 8;
  std::size_t grid_width = 12;
  // Normalize by the clip max instead of each frame's max.
  bool per_clip = false;

  void validate() const;
};

// raw: T x h0 x w0 magnitudes. Suppress at full resolution, downsample, then
// renormalize.
FlowMap prepare_flow(std::span<const double> raw, std::size_t t, std::size_t h0, std::size_t w0,
                     const FlowPrepConfig& cfg);

// Guidance for a training sample: its analytic flow when present, otherwise
// the frame-difference estimate.
FlowMap sample_flow_guidance(const VideoSample& s, const FlowPrepConfig& cfg);

}  // namespace flaming
