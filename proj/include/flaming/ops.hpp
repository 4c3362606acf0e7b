#pragma once

#include <cstddef>
#include <vector>

#include "flaming/tensor.hpp"

// Differentiable tensor operations. Every op validates extents (DimensionError),
// rejects non-finite results (NonFiniteError naming the op) and, when a tape is
// active and any input requires grad, records its backward rule.
namespace flaming {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// x + bias broadcast along the last axis.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Reduce one axis away (rank-1 results keep shape [1]).
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor transpose(const Tensor& x);  // rank 2
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
// Stacks `count` copies of x along a new leading axis.
Tensor repeat_leading(const Tensor& x, std::size_t count);
// x: R x C, returns [R] with out[r] = x[r, columns[r]].
Tensor pick(const Tensor& x, const std::vector<std::size_t>& columns);

Tensor matmul(const Tensor& a, const Tensor& b);
// x [..., in] * weight [in, out] + bias [out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
// a [B, M, K] * b [B, K, N], or b [B, N, K] transposed.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// Row-wise over the last axis, stabilized by the per-row max.
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// Unit-norm rows; an all-zero row stays zero and passes zero gradient.
Tensor l2_normalize_rows(const Tensor& x);
// Vectors of equal length; zero-norm input gives 0 with zero gradient.
Tensor cosine_similarity(const Tensor& u, const Tensor& v);

// x [B, T, Cin], weight [width, Cin, Cout], bias [Cout] -> [B, T + 2p - width + 1, Cout].
Tensor conv1d_temporal(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t padding);

struct Conv2dGeometry {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};
// x [B, Cin, H, W], weight [Cout, Cin, kh, kw], bias [Cout] -> [B, Cout, H', W'].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const Conv2dGeometry& geometry);
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

// Same values, no gradient flows back through the result.
Tensor stop_gradient(const Tensor& x);

// Mean cross-entropy of row-wise logits [R, C] against integer labels.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

}  // namespace flaming
