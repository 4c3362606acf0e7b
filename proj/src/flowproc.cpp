#include "flaming/flowproc.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flaming/errors.hpp"

namespace flaming {

namespace {

// ceil(q * P), treating products within rounding noise of an integer as that
// integer (0.85 * 20 must give 17, not 18).
std::size_t nearest_rank(double q, std::size_t count) {
  const double x = q * static_cast<double>(count);
  const double r = std::round(x);
  double k = std::fabs(x - r) <= 1e-9 * std::max(1.0, x) ? r : std::ceil(x);
  k = std::clamp(k, 1.0, static_cast<double>(count));
  return static_cast<std::size_t>(k);
}

void normalize_by_max(std::span<double> v) {
  double peak = 0.0;
  for (double x : v) peak = std::max(peak, x);
  if (peak > 0.0) {
    for (double& x : v) x /= peak;
  }
}

}  // namespace

double nearest_rank_quantile(std::span<const double> values, double q) {
  if (values.empty()) throw DimensionError("nearest_rank_quantile: empty input");
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("quantile must lie in (0, 1), got " + std::to_string(q));
  std::vector<double> sorted(values.begin(), values.end());
  const std::size_t k = nearest_rank(q, sorted.size());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
  return sorted[k - 1];
}

std::vector<double> quantile_suppress_normalize(std::span<const double> raw, double q) {
  const double cut = nearest_rank_quantile(raw, q);
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = std::max(0.0, raw[i] - cut);
  normalize_by_max(out);
  return out;
}

std::vector<double> downsample_area(std::span<const double> frame, std::size_t h0, std::size_t w0, std::size_t h,
                                    std::size_t w) {
  if (h == 0 || w == 0 || h0 % h != 0 || w0 % w != 0) {
    throw ConfigError("cannot area-downsample " + std::to_string(h0) + "x" + std::to_string(w0) + " to " +
                      std::to_string(h) + "x" + std::to_string(w) + ": extents must divide evenly");
  }
  if (frame.size() != h0 * w0) throw DimensionError("downsample_area: frame size does not match extents");
  const std::size_t bh = h0 / h;
  const std::size_t bw = w0 / w;
  const double inv = 1.0 / static_cast<double>(bh * bw);
  std::vector<double> out(h * w, 0.0);
  for (std::size_t y = 0; y < h0; ++y) {
    for (std::size_t x = 0; x < w0; ++x) out[(y / bh) * w + x / bw] += frame[y * w0 + x];
  }
  for (double& v : out) v *= inv;
  return out;
}

std::vector<double> frame_difference_flow(std::span<const float> frames, std::size_t t, std::size_t h0,
                                          std::size_t w0) {
  if (t < 2) throw ContractError("frame_difference_flow needs at least 2 frames, got " + std::to_string(t));
  const std::size_t plane = h0 * w0;
  if (frames.size() != t * plane * 3) throw DimensionError("frame_difference_flow: frame buffer size mismatch");
  std::vector<double> out(t * plane);
  for (std::size_t f = 0; f + 1 < t; ++f) {
    const float* a = frames.data() + f * plane * 3;
    const float* b = a + plane * 3;
    for (std::size_t p = 0; p < plane; ++p) {
      double s = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = static_cast<double>(b[p * 3 + c]) - static_cast<double>(a[p * 3 + c]);
        s += d * d;
      }
      out[f * plane + p] = std::sqrt(s);
    }
  }
  std::copy_n(out.begin() + static_cast<std::ptrdiff_t>((t - 2) * plane), plane,
              out.begin() + static_cast<std::ptrdiff_t>((t - 1) * plane));
  return out;
}

void FlowPrepConfig::validate() const {
  if (!(quantile > 0.0 && quantile < 1.0)) throw ConfigError("flow quantile must lie in (0, 1)");
  if (grid_height == 0 || grid_width == 0) throw ConfigError("flow grid extents must be positive");
}

FlowMap prepare_flow(std::span<const double> raw, std::size_t t, std::size_t h0, std::size_t w0,
                     const FlowPrepConfig& cfg) {
  cfg.validate();
  const std::size_t plane = h0 * w0;
  if (raw.size() != t * plane) throw DimensionError("prepare_flow: raw flow size does not match T x H0 x W0");
  FlowMap m;
  m.frames = t;
  m.height = cfg.grid_height;
  m.width = cfg.grid_width;
  const std::size_t cells = m.height * m.width;
  m.values.resize(t * cells);
  for (std::size_t f = 0; f < t; ++f) {
    const auto suppressed = quantile_suppress_normalize(raw.subspan(f * plane, plane), cfg.quantile);
    auto small = downsample_area(suppressed, h0, w0, m.height, m.width);
    std::span<double> dst(m.values.data() + f * cells, cells);
    std::copy(small.begin(), small.end(), dst.begin());
    if (!cfg.per_clip) normalize_by_max(dst);
  }
  if (cfg.per_clip) normalize_by_max(m.values);
  return m;
}

FlowMap sample_flow_guidance(const VideoSample& s, const FlowPrepConfig& cfg) {
  if (s.has_flow()) {
    std::vector<double> raw(s.gt_flow.begin(), s.gt_flow.end());
    return prepare_flow(raw, s.frames_raw, s.height, s.width, cfg);
  }
  const auto raw = frame_difference_flow(s.frames, s.frames_raw, s.height, s.width);
  return prepare_flow(raw, s.frames_raw, s.height, s.width, cfg);
}

}  // namespace flaming
