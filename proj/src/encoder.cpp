#include "flaming/encoder.hpp"

#include <cmath>

#include "flaming/errors.hpp"
#include "flaming/ops.hpp"

namespace flaming {

void EncoderConfig::validate() const {
  if (tokens == 0 || blocks == 0 || channels == 0) throw ConfigError("encoder extents must be positive");
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("channels " + std::to_string(channels) + " not divisible by heads " + std::to_string(heads));
  }
  if (positional && channels % 4 != 0) throw ConfigError("positional encoding needs channels divisible by 4");
  if (grid_height == 0 || grid_width == 0) throw ConfigError("encoder grid extents must be positive");
}

Tensor positional_encoding_2d(std::size_t h, std::size_t w, std::size_t channels) {
  const std::size_t half = channels / 2;
  Tensor pe({h * w, channels});
  auto v = pe.mutable_data();
  auto fill = [&](std::size_t offset, std::size_t pos, std::size_t cell) {
    for (std::size_t i = 0; i < half / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(half));
      v[cell * channels + offset + 2 * i] = std::sin(static_cast<double>(pos) * freq);
      v[cell * channels + offset + 2 * i + 1] = std::cos(static_cast<double>(pos) * freq);
    }
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      fill(0, y, y * w + x);
      fill(half, x, y * w + x);
    }
  }
  return pe;
}

ActorEncoder make_encoder(ParamStore& params, const std::string& prefix, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  ActorEncoder enc;
  enc.config = cfg;
  const std::size_t c = cfg.channels;
  enc.queries = params.add(prefix + ".queries", {cfg.tokens, c});
  init_normal(enc.queries, cfg.query_init_std, rng);
  for (std::size_t l = 0; l < cfg.blocks; ++l) {
    const std::string p = prefix + ".block" + std::to_string(l);
    EncoderBlock b;
    b.self_attn = make_attention(params, p + ".mhsa", c, cfg.heads, rng);
    b.cross_attn = make_attention(params, p + ".mhca", c, cfg.heads, rng);
    b.ln1_g = params.add(p + ".ln1.g", {c});
    b.ln1_b = params.add(p + ".ln1.b", {c});
    for (double& x : b.ln1_g.mutable_data()) x = 1.0;
    if (cfg.feed_forward) {
      b.ln2_g = params.add(p + ".ln2.g", {c});
      b.ln2_b = params.add(p + ".ln2.b", {c});
      for (double& x : b.ln2_g.mutable_data()) x = 1.0;
      b.ffn_w1 = params.add(p + ".ffn.w1", {c, 4 * c});
      init_uniform(b.ffn_w1, std::sqrt(1.0 / static_cast<double>(c)), rng);
      b.ffn_b1 = params.add(p + ".ffn.b1", {4 * c});
      b.ffn_w2 = params.add(p + ".ffn.w2", {4 * c, c});
      init_uniform(b.ffn_w2, std::sqrt(1.0 / static_cast<double>(4 * c)), rng);
      b.ffn_b2 = params.add(p + ".ffn.b2", {c});
    }
    enc.blocks.push_back(std::move(b));
  }
  if (cfg.positional) enc.positional = positional_encoding_2d(cfg.grid_height, cfg.grid_width, c);
  return enc;
}

EncoderOutput encode_video(const ActorEncoder& enc, const Tensor& features) {
  const auto& cfg = enc.config;
  if (features.rank() != 3 || features.dim(2) != cfg.channels) {
    throw DimensionError("encoder with C=" + std::to_string(cfg.channels) + " cannot take features " +
                      shape_string(features.shape()));
  }
  const std::size_t b = features.dim(0);
  Tensor keys = features, values = features;
  if (enc.positional.defined()) {
    if (enc.positional.dim(0) != features.dim(1)) {
      throw DimensionError("feature grid has " + std::to_string(features.dim(1)) + " cells, positional encoding " +
                        std::to_string(enc.positional.dim(0)));
    }
    const Tensor pe = repeat_leading(enc.positional, b);
    keys = add(features, pe);
    if (cfg.positional_values) values = keys;
  }
  EncoderOutput out;
  Tensor z = repeat_leading(enc.queries, b);  // [B, K, C]
  for (const auto& blk : enc.blocks) {
    const Tensor q = add(z, multi_head_attention(blk.self_attn, z, z, z).output);
    auto cross = multi_head_attention(blk.cross_attn, q, keys, values, true);
    z = layer_norm(add(q, cross.output), blk.ln1_g, blk.ln1_b);
    if (cfg.feed_forward) {
      const Tensor hidden = relu(linear(z, blk.ffn_w1, blk.ffn_b1));
      z = layer_norm(add(z, linear(hidden, blk.ffn_w2, blk.ffn_b2)), blk.ln2_g, blk.ln2_b);
    }
    out.attention.push_back(cross.maps);
  }
  out.tokens = z;
  return out;
}

std::vector<Tensor> representative_attention(const std::vector<Tensor>& attention, std::size_t k_flm) {
  std::vector<Tensor> out;
  for (const auto& att : attention) {
    if (att.rank() != 3 || k_flm == 0 || k_flm > att.dim(1)) {
      throw ContractError("representative_attention: K_flm=" + std::to_string(k_flm) + " outside [1, " +
                          (att.rank() == 3 ? std::to_string(att.dim(1)) : std::string("?")) + "]");
    }
    out.push_back(mean_axis(slice(att, 1, 0, k_flm), 1));
  }
  return out;
}

}  // namespace flaming
