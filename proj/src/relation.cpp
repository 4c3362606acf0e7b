#include "flaming/relation.hpp"

#include <cmath>

#include "flaming/errors.hpp"
#include "flaming/ops.hpp"

namespace flaming {

std::size_t RelationConfig::conv1d_output_frames() const {
  std::size_t t = frames;
  for (std::size_t i = 0; i < conv1d_layers; ++i) {
    if (t + 2 * conv1d_padding < conv1d_width) return 0;
    t = t + 2 * conv1d_padding - conv1d_width + 1;
  }
  return t;
}

std::pair<std::size_t, std::size_t> RelationConfig::conv2d_output_extent() const {
  std::size_t k = tokens, t = frames;
  for (std::size_t i = 0; i < conv2d_layers; ++i) {
    if (k < conv2d_kernel_s || t < conv2d_kernel_t) return {0, 0};
    k = (k - conv2d_kernel_s) / conv2d_stride_s + 1;
    t = (t - conv2d_kernel_t) / conv2d_stride_t + 1;
  }
  return {k, t};
}

void RelationConfig::validate() const {
  if (channels == 0 || tokens == 0 || frames == 0 || classes < 2) throw ConfigError("relation extents invalid");
  if (heads == 0 || channels % heads != 0) throw ConfigError("relation channels not divisible by heads");
  if (conv1d_width == 0) throw ConfigError("conv1d_width must be positive");
  if (conv1d_output_frames() == 0) {
    throw ConfigError("temporal conv stack (" + std::to_string(conv1d_layers) + " x width " +
                      std::to_string(conv1d_width) + ", padding " + std::to_string(conv1d_padding) +
                      ") consumes more than T=" + std::to_string(frames) + " frames");
  }
  if (use_group_path) {
    if (conv2d_kernel_s == 0 || conv2d_kernel_t == 0 || conv2d_stride_s == 0 || conv2d_stride_t == 0) {
      throw ConfigError("conv2d kernel and stride must be positive");
    }
    if (conv2d_output_extent().first == 0) {
      throw ConfigError("spatio-temporal kernel " + std::to_string(conv2d_kernel_t) + "x" +
                        std::to_string(conv2d_kernel_s) + " exceeds the (T, K) = (" + std::to_string(frames) + ", " +
                        std::to_string(tokens) + ") grid after " + std::to_string(conv2d_layers) + " layers");
    }
  }
}

namespace {

Mlp make_mlp(ParamStore& params, const std::string& prefix, std::size_t c, std::size_t classes, Rng& rng) {
  Mlp m;
  m.w1 = params.add(prefix + ".w1", {c, c});
  init_uniform(m.w1, std::sqrt(1.0 / static_cast<double>(c)), rng);
  m.b1 = params.add(prefix + ".b1", {c});
  m.w2 = params.add(prefix + ".w2", {c, classes});
  init_uniform(m.w2, std::sqrt(1.0 / static_cast<double>(c)), rng);
  m.b2 = params.add(prefix + ".b2", {classes});
  return m;
}

}  // namespace

RelationModule make_relation(ParamStore& params, const std::string& prefix, const RelationConfig& cfg, Rng& rng) {
  cfg.validate();
  RelationModule rel;
  rel.config = cfg;
  const std::size_t c = cfg.channels;
  for (std::size_t i = 0; i < cfg.conv1d_layers; ++i) {
    const std::string p = prefix + ".tconv" + std::to_string(i);
    Tensor w = params.add(p + ".w", {cfg.conv1d_width, c, c});
    init_uniform(w, std::sqrt(6.0 / static_cast<double>(cfg.conv1d_width * c)), rng);
    rel.conv1d_w.push_back(w);
    rel.conv1d_b.push_back(params.add(p + ".b", {c}));
  }
  rel.actor_mhsa = make_attention(params, prefix + ".relation_mhsa", c, cfg.heads, rng);
  rel.actor_head = make_mlp(params, prefix + ".actor_head", c, cfg.classes, rng);
  if (cfg.use_group_path) {
    rel.group_mhsa = cfg.share_relation ? rel.actor_mhsa
                                        : make_attention(params, prefix + ".group_mhsa", c, cfg.heads, rng);
    for (std::size_t i = 0; i < cfg.conv2d_layers; ++i) {
      const std::string p = prefix + ".stconv" + std::to_string(i);
      Tensor w = params.add(p + ".w", {c, c, cfg.conv2d_kernel_s, cfg.conv2d_kernel_t});
      init_uniform(w, std::sqrt(6.0 / static_cast<double>(c * cfg.conv2d_kernel_s * cfg.conv2d_kernel_t)), rng);
      rel.conv2d_w.push_back(w);
      rel.conv2d_b.push_back(params.add(p + ".b", {c}));
    }
    rel.group_head = make_mlp(params, prefix + ".group_head", c, cfg.classes, rng);
    rel.frame_w = params.add(prefix + ".frame_head.w", {c, cfg.classes});
    init_uniform(rel.frame_w, std::sqrt(1.0 / static_cast<double>(c)), rng);
    rel.frame_b = params.add(prefix + ".frame_head.b", {cfg.classes});
  }
  return rel;
}

Tensor apply_mlp(const Mlp& mlp, const Tensor& x) {
  return linear(relu(linear(x, mlp.w1, mlp.b1)), mlp.w2, mlp.b2);
}

namespace {

void check_tokens(const RelationConfig& cfg, const Tensor& tokens) {
  if (tokens.rank() != 3 || tokens.dim(1) != cfg.tokens || tokens.dim(2) != cfg.channels ||
      tokens.dim(0) % cfg.frames != 0) {
    throw DimensionError("relation module expects [N*" + std::to_string(cfg.frames) + ", " +
                         std::to_string(cfg.tokens) + ", " + std::to_string(cfg.channels) + "] tokens, got " +
                         shape_string(tokens.shape()));
  }
}

}  // namespace

ActorPathOutput actor_path(const RelationModule& rel, const Tensor& tokens) {
  const auto& cfg = rel.config;
  check_tokens(cfg, tokens);
  const std::size_t n = tokens.dim(0) / cfg.frames;
  const std::size_t k = cfg.tokens, c = cfg.channels;
  // [N, T, K, C] -> [N, K, T, C] -> [N*K, T, C]
  Tensor x = reshape(permute(reshape(tokens, {n, cfg.frames, k, c}), {0, 2, 1, 3}), {n * k, cfg.frames, c});
  for (std::size_t i = 0; i < rel.conv1d_w.size(); ++i) {
    x = relu(conv1d_temporal(x, rel.conv1d_w[i], rel.conv1d_b[i], cfg.conv1d_padding));
  }
  const Tensor per_actor = reshape(mean_axis(x, 1), {n, k, c});
  const Tensor related = multi_head_attention(rel.actor_mhsa, per_actor, per_actor, per_actor).output;
  ActorPathOutput out;
  out.f_actor = mean_axis(related, 1);
  out.logits = apply_mlp(rel.actor_head, out.f_actor);
  return out;
}

GroupPathOutput group_path(const RelationModule& rel, const Tensor& tokens) {
  const auto& cfg = rel.config;
  if (!cfg.use_group_path) throw ContractError("group path is disabled in this configuration");
  check_tokens(cfg, tokens);
  const std::size_t n = tokens.dim(0) / cfg.frames;
  const std::size_t k = cfg.tokens, c = cfg.channels;
  const Tensor u = multi_head_attention(rel.group_mhsa, tokens, tokens, tokens).output;  // [N*T, K, C]
  GroupPathOutput out;
  const Tensor frame_in = cfg.detach == DetachMode::GfBranch ? stop_gradient(u) : u;
  out.frame_logits = linear(mean_axis(frame_in, 1), rel.frame_w, rel.frame_b);
  // [N, T, K, C] -> [N, C, K, T]
  Tensor grid = permute(reshape(u, {n, cfg.frames, k, c}), {0, 3, 2, 1});
  if (cfg.detach == DetachMode::ConvInput) grid = stop_gradient(grid);
  const Conv2dGeometry geo{cfg.conv2d_stride_s, cfg.conv2d_stride_t, 0, 0};
  for (std::size_t i = 0; i < rel.conv2d_w.size(); ++i) grid = relu(conv2d(grid, rel.conv2d_w[i], rel.conv2d_b[i], geo));
  const std::size_t cells = grid.dim(2) * grid.dim(3);
  out.f_group = mean_axis(reshape(grid, {n, c, cells}), 2);
  out.logits = apply_mlp(rel.group_head, out.f_group);
  return out;
}

Tensor fuse_and_classify(const Tensor& logits_actor, const Tensor& logits_group, FuseMode mode) {
  if (logits_actor.shape() != logits_group.shape()) {
    throw ContractError("fuse_and_classify: logit shapes " + shape_string(logits_actor.shape()) + " and " +
                        shape_string(logits_group.shape()) + " differ");
  }
  if (mode == FuseMode::Probabilities) {
    return log(scale(add(softmax_rows(logits_actor), softmax_rows(logits_group)), 0.5));
  }
  return scale(add(logits_actor, logits_group), 0.5);
}

RelationOutput relation_forward(const RelationModule& rel, const Tensor& tokens) {
  RelationOutput out;
  out.actor = actor_path(rel, tokens);
  if (rel.config.use_group_path) {
    out.group = group_path(rel, tokens);
    out.fused = fuse_and_classify(out.actor.logits, out.group.logits, rel.config.fuse);
  } else {
    out.fused = out.actor.logits;
  }
  return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("argmax_rows expects a matrix");
  const std::size_t r = logits.dim(0), c = logits.dim(1);
  std::vector<std::size_t> out(r, 0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 1; j < c; ++j) {
      if (logits.at(i * c + j) > logits.at(i * c + out[i])) out[i] = j;
    }
  }
  return out;
}

}  // namespace flaming
