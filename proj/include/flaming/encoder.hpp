#pragma once

#include <string>
#include <vector>

#include "flaming/attention.hpp"
#include "flaming/params.hpp"
#include "flaming/tensor.hpp"

namespace flaming {

struct EncoderConfig {
  std::size_t tokens = 8;    // K
  std::size_t channels = 32; // C
  std::size_t blocks = 3;    // L
  std::size_t heads = 4;
  bool feed_forward = true;
  bool positional = true;         // sinusoidal grid encoding added to MHCA keys
  bool positional_values = true;  // ... and to the MHCA values (tokens carry where they looked); needs positional
  // Queries at 0.02 leave cross-attention uniform and every clip's tokens
  // alike; unit scale gives each token a distinct starting focus.
  double query_init_std = 1.0;
  std::size_t grid_height = 8;
  std::size_t grid_width = 12;

  void validate() const;
};

struct EncoderBlock {
  MultiHeadAttention self_attn;
  MultiHeadAttention cross_attn;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;  // hidden width 4C
};

struct ActorEncoder {
  EncoderConfig config;
  Tensor queries;  // Z0 [K, C]
  std::vector<EncoderBlock> blocks;
  Tensor positional;  // [HW, C] constant, undefined when disabled
};

ActorEncoder make_encoder(ParamStore& params, const std::string& prefix, const EncoderConfig& cfg, Rng& rng);

struct EncoderOutput {
  Tensor tokens;                   // [B, K, C], B = clips x frames
  std::vector<Tensor> attention;   // L entries of [B, K, HW], head-averaged
};

// features [B, HW, C]; every frame starts from Z0.
EncoderOutput encode_video(const ActorEncoder& enc, const Tensor& features);

// Mean of the first k_flm token maps per block: L entries of [B, HW].
std::vector<Tensor> representative_attention(const std::vector<Tensor>& attention, std::size_t k_flm);

// Fixed 2D sinusoidal encoding [h*w, channels]: first half of the channels
// encode the row, second half the column.
Tensor positional_encoding_2d(std::size_t h, std::size_t w, std::size_t channels);

}  // namespace flaming
