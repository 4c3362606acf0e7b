#include "flaming/model.hpp"

#include <algorithm>

#include "flaming/errors.hpp"

namespace flaming {

void ModelConfig::resolve() {
  backbone.validate();
  encoder.channels = backbone.channels;
  encoder.grid_height = backbone.grid_height();
  encoder.grid_width = backbone.grid_width();
  encoder.validate();
  relation.channels = encoder.channels;
  relation.tokens = encoder.tokens;
  relation.validate();
}

FlamingModel::FlamingModel(ModelConfig cfg) : config_(std::move(cfg)) {
  config_.resolve();
  Rng rng(config_.init_seed);
  backbone_ = make_backbone(params_, "backbone", config_.backbone, rng);
  encoder_ = make_encoder(params_, "encoder", config_.encoder, rng);
  relation_ = make_relation(params_, "relation", config_.relation, rng);
}

FlamingModel::Output FlamingModel::forward(const Tensor& frames) const {
  if (frames.rank() != 4 || frames.dim(0) % config_.relation.frames != 0) {
    throw DimensionError("model input must be [N*T, 3, H0, W0] with T=" + std::to_string(config_.relation.frames) +
                         ", got " + shape_string(frames.shape()));
  }
  Output out;
  out.features = extract_features(backbone_, frames);
  out.encoded = encode_video(encoder_, out.features);
  out.relation = relation_forward(relation_, out.encoded.tokens);
  return out;
}

void pack_clip(const VideoSample& s, const std::vector<std::size_t>& indices, bool flip, double brightness,
               std::span<double> dst) {
  const std::size_t h = s.height, w = s.width, plane = h * w;
  if (dst.size() != indices.size() * 3 * plane) throw DimensionError("pack_clip: destination size mismatch");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= s.frames_raw) throw ContractError("pack_clip: frame index out of range");
    const float* src = s.frames.data() + indices[i] * plane * 3;
    double* out = dst.data() + i * 3 * plane;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t sx = flip ? w - 1 - x : x;
        const float* px = src + (y * w + sx) * 3;
        for (std::size_t c = 0; c < 3; ++c) {
          double v = static_cast<double>(px[c]);
          if (brightness != 1.0) v = std::clamp(v * brightness, 0.0, 1.0);
          out[c * plane + y * w + x] = v;
        }
      }
    }
  }
}

Tensor pack_batch(const std::vector<const VideoSample*>& clips, const std::vector<std::vector<std::size_t>>& indices,
                  const std::vector<bool>& flips, const std::vector<double>& brightness) {
  if (clips.empty() || indices.size() != clips.size() || flips.size() != clips.size() ||
      brightness.size() != clips.size()) {
    throw ContractError("pack_batch: per-clip argument lists must match the clip count");
  }
  const std::size_t t = indices[0].size();
  const std::size_t h = clips[0]->height, w = clips[0]->width;
  Tensor out({clips.size() * t, 3, h, w});
  auto data = out.mutable_data();
  const std::size_t per_clip = t * 3 * h * w;
  for (std::size_t n = 0; n < clips.size(); ++n) {
    if (clips[n]->height != h || clips[n]->width != w || indices[n].size() != t) {
      throw DimensionError("pack_batch: clips differ in frame size or frame count");
    }
    pack_clip(*clips[n], indices[n], flips[n], brightness[n], data.subspan(n * per_clip, per_clip));
  }
  return out;
}

}  // namespace flaming
