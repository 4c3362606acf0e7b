#include "flaming/evaluation.hpp"

#include <algorithm>

#include "flaming/errors.hpp"
#include "flaming/relation.hpp"

namespace flaming {

namespace {

void check_classes(const FlamingModel& model, std::span<const VideoSample> samples) {
  const std::size_t classes = model.config().relation.classes;
  if (classes != kNumClasses) {
    throw ConfigError("model predicts " + std::to_string(classes) + " classes, the dataset has " +
                      std::to_string(kNumClasses));
  }
  const auto& bb = model.config().backbone;
  for (const auto& s : samples) {
    if (s.height != bb.in_height || s.width != bb.in_width) {
      throw ConfigError("sample " + s.id + " is " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                        ", model expects " + std::to_string(bb.in_height) + "x" + std::to_string(bb.in_width));
    }
  }
}

// [blocks][rows][cells] from the encoder's per-block attention.
std::vector<std::vector<double>> representative_rows(const FlamingModel::Output& out, std::size_t k_flm) {
  std::vector<std::vector<double>> blocks;
  for (const auto& a : representative_attention(out.encoded.attention, k_flm)) {
    blocks.emplace_back(a.data().begin(), a.data().end());
  }
  return blocks;
}

}  // namespace

#ifndef FLAMING_NO_EVAL_TRACKS
std::vector<double> key_actor_grid_masks(const VideoSample& s, const std::vector<std::size_t>& indices,
                                         std::size_t grid_height, std::size_t grid_width) {
  if (grid_height == 0 || grid_width == 0 || s.height % grid_height || s.width % grid_width) {
    throw ConfigError("key-actor grid must divide the frame");
  }
  const auto pixels = key_actor_masks(s);
  const std::size_t ch = s.height / grid_height, cw = s.width / grid_width, plane = s.height * s.width;
  std::vector<double> out(indices.size() * grid_height * grid_width, 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const float* frame = pixels.data() + indices[i] * plane;
    double* dst = out.data() + i * grid_height * grid_width;
    for (std::size_t y = 0; y < s.height; ++y) {
      for (std::size_t x = 0; x < s.width; ++x) {
        if (frame[y * s.width + x] > 0.0f) dst[(y / ch) * grid_width + x / cw] = 1.0;
      }
    }
  }
  return out;
}
#endif

EvalReport evaluate(const FlamingModel& model, const std::vector<VideoSample>& samples, const EvalOptions& opts) {
  if (samples.empty()) throw ContractError("evaluate: empty dataset");
  if (opts.batch == 0) throw ConfigError("evaluation batch must be positive");
  check_classes(model, samples);
  const std::size_t frames = model.config().relation.frames;
  [[maybe_unused]] const std::size_t cells = model.config().encoder.grid_height * model.config().encoder.grid_width;
  EvalReport report;
#ifdef FLAMING_NO_EVAL_TRACKS
  const bool localize = false;
#else
  const bool localize = opts.localization;
#endif
  double loc_sum = 0.0;
  std::size_t loc_count = 0;

  NoTapeScope inference;
  for (std::size_t start = 0; start < samples.size(); start += opts.batch) {
    const std::size_t n = std::min(opts.batch, samples.size() - start);
    std::vector<const VideoSample*> clips;
    std::vector<std::vector<std::size_t>> indices;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = samples[start + i];
      clips.push_back(&s);
      indices.push_back(segment_indices(s.frames_raw, frames, SamplingMode::Eval, 0));
    }
    const auto out = model.forward(pack_batch(clips, indices, std::vector<bool>(n, false), std::vector<double>(n, 1.0)));
    const auto pred = argmax_rows(out.relation.fused);
    for (std::size_t i = 0; i < n; ++i) {
      report.confusion.add(class_index(clips[i]->label), pred[i]);
      report.predictions.push_back(pred[i]);
    }
#ifndef FLAMING_NO_EVAL_TRACKS
    if (localize) {
      const auto blocks = representative_rows(out, opts.k_flm);
      const auto& enc = model.config().encoder;
      for (std::size_t i = 0; i < n; ++i) {
        const auto masks = key_actor_grid_masks(*clips[i], indices[i], enc.grid_height, enc.grid_width);
        for (const auto& b : blocks) {
          loc_sum += attention_localization(std::span<const double>(b).subspan(i * frames * cells, frames * cells),
                                            masks, frames, cells);
          ++loc_count;
        }
      }
    }
#endif
  }
  if (localize && loc_count > 0) report.localization = loc_sum / static_cast<double>(loc_count);
  return report;
}

ClipAttention clip_attention(const FlamingModel& model, const VideoSample& s, std::size_t k_flm) {
  check_classes(model, std::span<const VideoSample>(&s, 1));
  const std::size_t frames = model.config().relation.frames;
  const std::size_t cells = model.config().encoder.grid_height * model.config().encoder.grid_width;
  NoTapeScope inference;
  const auto idx = segment_indices(s.frames_raw, frames, SamplingMode::Eval, 0);
  const auto out = model.forward(pack_batch({&s}, {idx}, {false}, {1.0}));
  ClipAttention result;
  for (const auto& b : representative_rows(out, k_flm)) {
    auto& block = result.blocks.emplace_back();
    for (std::size_t t = 0; t < frames; ++t) block.emplace_back(b.begin() + t * cells, b.begin() + (t + 1) * cells);
  }
  // last block: [T, K, cells]
  const auto last = out.encoded.attention.back().data();
  const std::size_t k = model.config().encoder.tokens;
  result.tokens.assign(k, {});
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t t = 0; t < frames; ++t) {
      const auto row = last.subspan((t * k + j) * cells, cells);
      result.tokens[j].emplace_back(row.begin(), row.end());
    }
  }
  return result;
}

}  // namespace flaming
