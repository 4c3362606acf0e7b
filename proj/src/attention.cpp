#include "flaming/attention.hpp"

#include <cmath>

#include "flaming/errors.hpp"
#include "flaming/ops.hpp"

namespace flaming {

namespace {

// [B, S, C] -> [B*h, S, C/h]
Tensor split_heads(const Tensor& x, std::size_t heads) {
  const std::size_t b = x.dim(0), s = x.dim(1), c = x.dim(2);
  const Tensor r = reshape(x, {b, s, heads, c / heads});
  return reshape(permute(r, {0, 2, 1, 3}), {b * heads, s, c / heads});
}

// [B*h, S, d] -> [B, S, h*d]
Tensor merge_heads(const Tensor& x, std::size_t heads) {
  const std::size_t bh = x.dim(0), s = x.dim(1), d = x.dim(2);
  const Tensor r = reshape(x, {bh / heads, heads, s, d});
  return reshape(permute(r, {0, 2, 1, 3}), {bh / heads, s, heads * d});
}

}  // namespace

MultiHeadAttention make_attention(ParamStore& params, const std::string& prefix, std::size_t channels,
                                  std::size_t heads, Rng& rng) {
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("attention channels " + std::to_string(channels) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  MultiHeadAttention m;
  m.channels = channels;
  m.heads = heads;
  const double bound = std::sqrt(1.0 / static_cast<double>(channels));
  auto weight = [&](const char* name) {
    Tensor t = params.add(prefix + "." + name, {channels, channels});
    init_uniform(t, bound, rng);
    return t;
  };
  auto bias = [&](const char* name) { return params.add(prefix + "." + name, {channels}); };
  m.wq = weight("wq");
  m.bq = bias("bq");
  m.wk = weight("wk");
  m.bk = bias("bk");
  m.wv = weight("wv");
  m.bv = bias("bv");
  m.wo = weight("wo");
  m.bo = bias("bo");
  return m;
}

AttentionResult multi_head_attention(const MultiHeadAttention& mha, const Tensor& query, const Tensor& key,
                                     const Tensor& value, bool want_maps) {
  if (query.rank() != 3 || key.rank() != 3 || value.rank() != 3 || query.dim(2) != mha.channels ||
      key.dim(2) != mha.channels || value.shape() != key.shape() || query.dim(0) != key.dim(0)) {
    throw DimensionError("multi_head_attention: query " + shape_string(query.shape()) + ", key " +
                         shape_string(key.shape()) + ", value " + shape_string(value.shape()) + " for C=" +
                         std::to_string(mha.channels));
  }
  const std::size_t h = mha.heads;
  const std::size_t d = mha.channels / h;
  const Tensor q = split_heads(linear(query, mha.wq, mha.bq), h);
  const Tensor k = split_heads(linear(key, mha.wk, mha.bk), h);
  const Tensor v = split_heads(linear(value, mha.wv, mha.bv), h);
  const Tensor scores = scale(bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(d)));
  const Tensor probs = softmax_rows(scores);  // [B*h, Q, S]
  AttentionResult out;
  out.output = linear(merge_heads(bmm(probs, v), h), mha.wo, mha.bo);
  if (want_maps) {
    const std::size_t b = query.dim(0), nq = query.dim(1), s = key.dim(1);
    out.maps = mean_axis(reshape(probs, {b, h, nq, s}), 1);
  }
  return out;
}

}  // namespace flaming
