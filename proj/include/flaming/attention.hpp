#pragma once

#include <string>

#include "flaming/params.hpp"
#include "flaming/tensor.hpp"

namespace flaming {

struct MultiHeadAttention {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // weights [C, C], biases [C]
  std::size_t channels = 0;
  std::size_t heads = 1;
};

// Registers `prefix`.{wq,bq,...}; weights uniform in +-sqrt(1/C), biases zero.
MultiHeadAttention make_attention(ParamStore& params, const std::string& prefix, std::size_t channels,
                                  std::size_t heads, Rng& rng);

struct AttentionResult {
  Tensor output;  // [B, Q, C]
  Tensor maps;    // [B, Q, S] softmax rows averaged over heads; undefined unless requested
};

// query [B, Q, C], key/value [B, S, C]. Per head: softmax(q k^T / sqrt(C/h)) v,
// heads concatenated and projected by wo.
AttentionResult multi_head_attention(const MultiHeadAttention& mha, const Tensor& query, const Tensor& key,
                                     const Tensor& value, bool want_maps = false);

}  // namespace flaming
