#include "flaming/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "flaming/errors.hpp"

namespace flaming {

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// c (m x n) = or += op(a) * op(b) with op(a) m x k and op(b) k x n.
void gemm(const double* a, bool trans_a, const double* b, bool trans_b, double* c, std::size_t m, std::size_t n,
          std::size_t k, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  ConstMap A(a, trans_a ? K : M, trans_a ? M : K);
  ConstMap B(b, trans_b ? N : K, trans_b ? K : N);
  MutMap C(c, M, N);
  if (!accumulate) C.setZero();
  if (!trans_a && !trans_b) {
    C.noalias() += A * B;
  } else if (trans_a && !trans_b) {
    C.noalias() += A.transpose() * B;
  } else if (!trans_a && trans_b) {
    C.noalias() += A * B.transpose();
  } else {
    C.noalias() += A.transpose() * B.transpose();
  }
}

void check_finite(const Tensor& out, std::string_view op) {
  for (double v : out.data()) {
    if (!std::isfinite(v)) {
      throw NonFiniteError("op '" + std::string(op) + "' produced a non-finite value in its " +
                           shape_string(out.shape()) + " output");
    }
  }
}

void require_defined(const Tensor& t, std::string_view op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined input tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Finishes an op: finite check plus tape record when any input is differentiable.
void finish(std::string_view op, Tensor& out, std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  check_finite(out, op);
  Tape* tape = active_tape();
  if (!tape) return;
  bool any = false;
  std::vector<ImplPtr> handles;
  for (const Tensor* t : inputs) {
    if (t && t->defined()) {
      handles.push_back(t->impl());
      any = any || t->requires_grad();
    }
  }
  if (!any) return;
  out.set_requires_grad(true);
  tape->record(op, std::move(handles), out.impl(), std::move(fn));
}

// Gradient span of an input, or empty if the input is not differentiable.
std::span<double> input_grad(const ImplPtr& impl) {
  if (!impl || !impl->requires_grad) return {};
  return grad_buffer(*impl);
}

std::size_t product(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= s[i];
  return p;
}

std::size_t last_extent(const Tensor& x) { return x.shape().back(); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  finish("add", out, {&a, &b}, [ai = a.impl(), bi = b.impl()](std::span<const double> g) {
    for (auto* impl : {&ai, &bi}) {
      auto gi = input_grad(*impl);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i];
    }
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  finish("sub", out, {&a, &b}, [ai = a.impl(), bi = b.impl()](std::span<const double> g) {
    auto ga = input_grad(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    auto gb = input_grad(bi);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  finish("mul", out, {&a, &b}, [ai = a.impl(), bi = b.impl()](std::span<const double> g) {
    auto ga = input_grad(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bi->data[i];
    auto gb = input_grad(bi);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * ai->data[i];
  });
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_defined(x, "add_bias");
  require_defined(bias, "add_bias");
  const std::size_t c = last_extent(x);
  if (bias.rank() != 1 || bias.dim(0) != c) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match last axis of " +
                         shape_string(x.shape()));
  }
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xv = x.data();
  auto bv = bias.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] + bv[i % c];
  finish("add_bias", out, {&x, &bias}, [xi = x.impl(), bi = bias.impl(), c](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    auto gb = input_grad(bi);
    if (!gb.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
    }
  });
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  require_defined(x, "scale");
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * factor;
  finish("scale", out, {&x}, [xi = x.impl(), factor](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
  });
  return out;
}

Tensor add_scalar(const Tensor& x, double value) {
  require_defined(x, "add_scalar");
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] + value;
  finish("add_scalar", out, {&x}, [xi = x.impl()](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
  return out;
}

Tensor relu(const Tensor& x) {
  require_defined(x, "relu");
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  finish("relu", out, {&x}, [xi = x.impl()](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xi->data[i] > 0.0) gx[i] += g[i];
    }
  });
  return out;
}

Tensor exp(const Tensor& x) {
  require_defined(x, "exp");
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::exp(xv[i]);
  finish("exp", out, {&x}, [xi = x.impl(), oi = out.impl()](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * oi->data[i];
  });
  return out;
}

Tensor log(const Tensor& x) {
  require_defined(x, "log");
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::log(xv[i]);
  finish("log", out, {&x}, [xi = x.impl()](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] / xi->data[i];
  });
  return out;
}

Tensor abs(const Tensor& x) {
  require_defined(x, "abs");
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::fabs(xv[i]);
  finish("abs", out, {&x}, [xi = x.impl()](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = xi->data[i];
      gx[i] += v > 0.0 ? g[i] : (v < 0.0 ? -g[i] : 0.0);
    }
  });
  return out;
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  auto xv = x.data();
  Tensor out = Tensor::scalar(std::accumulate(xv.begin(), xv.end(), 0.0));
  finish("sum", out, {&x}, [xi = x.impl()](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (auto& v : gx) v += g[0];
  });
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  require_defined(x, "sum_axis");
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("sum_axis: axis out of range for " + shape_string(s));
  const std::size_t outer = product(s, 0, axis);
  const std::size_t mid = s[axis];
  const std::size_t inner = product(s, axis + 1, s.size());
  Shape os;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) os.push_back(s[i]);
  }
  if (os.empty()) os.push_back(1);
  Tensor out(os);
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t a = 0; a < outer; ++a) {
    for (std::size_t m = 0; m < mid; ++m) {
      const double* src = xv.data() + (a * mid + m) * inner;
      double* dst = o.data() + a * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  finish("sum_axis", out, {&x}, [xi = x.impl(), outer, mid, inner](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t m = 0; m < mid; ++m) {
        double* dst = gx.data() + (a * mid + m) * inner;
        const double* src = g.data() + a * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    }
  });
  return out;
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  require_defined(x, "mean_axis");
  return scale(sum_axis(x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  finish("reshape", out, {&x}, [xi = x.impl()](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
  return out;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  require_defined(x, "permute");
  const Shape& s = x.shape();
  const std::size_t r = s.size();
  if (order.size() != r) throw DimensionError("permute: order length does not match rank");
  std::vector<bool> seen(r, false);
  for (auto o : order) {
    if (o >= r || seen[o]) throw DimensionError("permute: invalid axis order");
    seen[o] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
  Shape os(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    os[i] = s[order[i]];
    src_stride[i] = in_stride[order[i]];
  }
  // Flat source offset for every output position, in output order.
  const std::size_t n = x.numel();
  auto index = std::make_shared<std::vector<std::size_t>>(n);
  {
    std::vector<std::size_t> counter(r, 0);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < n; ++k) {
      (*index)[k] = offset;
      for (std::size_t d = r; d-- > 0;) {
        if (++counter[d] < os[d]) {
          offset += src_stride[d];
          break;
        }
        offset -= src_stride[d] * (os[d] - 1);
        counter[d] = 0;
      }
    }
  }
  Tensor out(os);
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t k = 0; k < n; ++k) o[k] = xv[(*index)[k]];
  finish("permute", out, {&x}, [xi = x.impl(), index](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t k = 0; k < g.size(); ++k) gx[(*index)[k]] += g[k];
  });
  return out;
}

Tensor transpose(const Tensor& x) {
  require_defined(x, "transpose");
  if (x.rank() != 2) throw DimensionError("transpose expects a matrix, got " + shape_string(x.shape()));
  return permute(x, {1, 0});
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& s0 = parts.front().shape();
  if (axis >= s0.size()) throw DimensionError("concat: axis out of range");
  Shape os = s0;
  os[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) throw DimensionError("concat: extent mismatch off the concat axis");
    }
    os[axis] += s[axis];
  }
  const std::size_t outer = product(s0, 0, axis);
  const std::size_t inner = product(s0, axis + 1, s0.size());
  Tensor out(os);
  auto o = out.mutable_data();
  const std::size_t out_row = os[axis] * inner;
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(axis) * inner;
    auto pv = p.data();
    for (std::size_t a = 0; a < outer; ++a) {
      std::copy_n(pv.data() + a * w, w, o.data() + a * out_row + offset);
    }
    widths.push_back(w);
    offset += w;
  }
  std::vector<ImplPtr> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  check_finite(out, "concat");
  Tape* tape = active_tape();
  const bool any = std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (tape && any) {
    out.set_requires_grad(true);
    tape->record("concat", impls, out.impl(), [impls, widths, outer, out_row](std::span<const double> g) {
      std::size_t off = 0;
      for (std::size_t p = 0; p < impls.size(); ++p) {
        auto gp = input_grad(impls[p]);
        const std::size_t w = widths[p];
        if (!gp.empty()) {
          for (std::size_t a = 0; a < outer; ++a) {
            const double* src = g.data() + a * out_row + off;
            double* dst = gp.data() + a * w;
            for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
          }
        }
        off += w;
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require_defined(x, "slice");
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("slice: axis out of range");
  if (begin >= end || end > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for extent " + std::to_string(s[axis]));
  }
  const std::size_t outer = product(s, 0, axis);
  const std::size_t inner = product(s, axis + 1, s.size());
  const std::size_t in_row = s[axis] * inner;
  const std::size_t w = (end - begin) * inner;
  const std::size_t off = begin * inner;
  Shape os = s;
  os[axis] = end - begin;
  Tensor out(os);
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t a = 0; a < outer; ++a) std::copy_n(xv.data() + a * in_row + off, w, o.data() + a * w);
  finish("slice", out, {&x}, [xi = x.impl(), outer, in_row, w, off](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t i = 0; i < w; ++i) gx[a * in_row + off + i] += g[a * w + i];
    }
  });
  return out;
}

Tensor repeat_leading(const Tensor& x, std::size_t count) {
  require_defined(x, "repeat_leading");
  if (count == 0) throw DimensionError("repeat_leading: count must be positive");
  Shape os{count};
  os.insert(os.end(), x.shape().begin(), x.shape().end());
  Tensor out(os);
  auto o = out.mutable_data();
  auto xv = x.data();
  const std::size_t n = x.numel();
  for (std::size_t c = 0; c < count; ++c) std::copy_n(xv.data(), n, o.data() + c * n);
  finish("repeat_leading", out, {&x}, [xi = x.impl(), count, n](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t c = 0; c < count; ++c) {
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[c * n + i];
    }
  });
  return out;
}

Tensor pick(const Tensor& x, const std::vector<std::size_t>& columns) {
  require_defined(x, "pick");
  if (x.rank() != 2 || columns.size() != x.dim(0)) {
    throw DimensionError("pick: need a matrix with one column index per row, got " + shape_string(x.shape()));
  }
  const std::size_t c = x.dim(1);
  for (auto col : columns) {
    if (col >= c) throw ContractError("pick: column index " + std::to_string(col) + " out of range");
  }
  Tensor out(Shape{columns.size()});
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < columns.size(); ++r) o[r] = x.data()[r * c + columns[r]];
  finish("pick", out, {&x}, [xi = x.impl(), columns, c](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t r = 0; r < columns.size(); ++r) gx[r * c + columns[r]] += g[r];
  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  Tensor out(Shape{m, n});
  gemm(a.data().data(), false, b.data().data(), false, out.mutable_data().data(), m, n, k, false);
  finish("matmul", out, {&a, &b}, [ai = a.impl(), bi = b.impl(), m, n, k](std::span<const double> g) {
    auto ga = input_grad(ai);
    if (!ga.empty()) gemm(g.data(), false, bi->data.data(), true, ga.data(), m, k, n, true);
    auto gb = input_grad(bi);
    if (!gb.empty()) gemm(ai->data.data(), true, g.data(), false, gb.data(), k, n, m, true);
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_defined(x, "linear");
  require_defined(weight, "linear");
  if (weight.rank() != 2 || last_extent(x) != weight.dim(0)) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " does not match weight " +
                         shape_string(weight.shape()));
  }
  const std::size_t in = weight.dim(0);
  const std::size_t outw = weight.dim(1);
  const std::size_t rows = x.numel() / in;
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outw)) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) + " does not match weight " +
                         shape_string(weight.shape()));
  }
  Shape os = x.shape();
  os.back() = outw;
  Tensor out(os);
  auto o = out.mutable_data();
  if (bias.defined()) {
    auto bv = bias.data();
    for (std::size_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), o.data() + r * outw);
  }
  gemm(x.data().data(), false, weight.data().data(), false, o.data(), rows, outw, in, bias.defined());
  finish("linear", out, {&x, &weight, &bias},
         [xi = x.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : ImplPtr{}, rows, in,
          outw](std::span<const double> g) {
           auto gx = input_grad(xi);
           if (!gx.empty()) gemm(g.data(), false, wi->data.data(), true, gx.data(), rows, in, outw, true);
           auto gw = input_grad(wi);
           if (!gw.empty()) gemm(xi->data.data(), true, g.data(), false, gw.data(), in, outw, rows, true);
           auto gb = input_grad(bi);
           if (!gb.empty()) {
             for (std::size_t r = 0; r < rows; ++r) {
               for (std::size_t j = 0; j < outw; ++j) gb[j] += g[r * outw + j];
             }
           }
         });
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_defined(a, "bmm");
  require_defined(b, "bmm");
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
    throw DimensionError("bmm: incompatible " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const std::size_t batch = a.dim(0);
  const std::size_t m = a.dim(1);
  const std::size_t k = a.dim(2);
  const std::size_t kb = transpose_b ? b.dim(2) : b.dim(1);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  if (kb != k) {
    throw DimensionError("bmm: inner extents differ " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out(Shape{batch, m, n});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < batch; ++i) {
    gemm(a.data().data() + i * m * k, false, b.data().data() + i * k * n, transpose_b, o.data() + i * m * n, m, n,
         k, false);
  }
  finish("bmm", out, {&a, &b},
         [ai = a.impl(), bi = b.impl(), batch, m, n, k, transpose_b](std::span<const double> g) {
           auto ga = input_grad(ai);
           auto gb = input_grad(bi);
           for (std::size_t i = 0; i < batch; ++i) {
             const double* gi = g.data() + i * m * n;
             const double* av = ai->data.data() + i * m * k;
             const double* bv = bi->data.data() + i * k * n;
             if (!ga.empty()) {
               // dA = G * B^T  (B stored k x n), or G * B (B stored n x k)
               gemm(gi, false, bv, !transpose_b, ga.data() + i * m * k, m, k, n, true);
             }
             if (!gb.empty()) {
               if (transpose_b) {
                 gemm(gi, true, av, false, gb.data() + i * k * n, n, k, m, true);
               } else {
                 gemm(av, true, gi, false, gb.data() + i * k * n, k, n, m, true);
               }
             }
           }
         });
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_defined(x, "softmax_rows");
  const std::size_t c = last_extent(x);
  const std::size_t rows = x.numel() / c;
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * c;
    double* dst = o.data() + r * c;
    const double mx = *std::max_element(src, src + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      dst[j] = std::exp(src[j] - mx);
      total += dst[j];
    }
    for (std::size_t j = 0; j < c; ++j) dst[j] /= total;
  }
  finish("softmax_rows", out, {&x}, [xi = x.impl(), oi = out.impl(), rows, c](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = oi->data.data() + r * c;
      const double* gy = g.data() + r * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += y[j] * (gy[j] - dot);
    }
  });
  return out;
}

Tensor log_softmax_rows(const Tensor& x) {
  require_defined(x, "log_softmax_rows");
  const std::size_t c = last_extent(x);
  const std::size_t rows = x.numel() / c;
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * c;
    const double mx = *std::max_element(src, src + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(src[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) o[r * c + j] = src[j] - lse;
  }
  finish("log_softmax_rows", out, {&x}, [xi = x.impl(), oi = out.impl(), rows, c](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gy = g.data() + r * c;
      double total = 0.0;
      for (std::size_t j = 0; j < c; ++j) total += gy[j];
      for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += gy[j] - std::exp(oi->data[r * c + j]) * total;
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_defined(x, "layer_norm");
  const std::size_t c = last_extent(x);
  if (gamma.numel() != c || beta.numel() != c) throw DimensionError("layer_norm: affine parameters must match last axis");
  const std::size_t rows = x.numel() / c;
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  auto o = out.mutable_data();
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = xv.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += src[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (src[j] - mu) * (src[j] - mu);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (src[j] - mu) * inv;
      (*xhat)[r * c + j] = h;
      o[r * c + j] = h * gv[j] + bv[j];
    }
  }
  finish("layer_norm", out, {&x, &gamma, &beta},
         [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), xhat, inv_std, rows, c](std::span<const double> g) {
           auto gx = input_grad(xi);
           auto gg = input_grad(gi);
           auto gb = input_grad(bi);
           const double n = static_cast<double>(c);
           for (std::size_t r = 0; r < rows; ++r) {
             const double* gy = g.data() + r * c;
             const double* h = xhat->data() + r * c;
             if (!gg.empty()) {
               for (std::size_t j = 0; j < c; ++j) gg[j] += gy[j] * h[j];
             }
             if (!gb.empty()) {
               for (std::size_t j = 0; j < c; ++j) gb[j] += gy[j];
             }
             if (!gx.empty()) {
               double s1 = 0.0;
               double s2 = 0.0;
               for (std::size_t j = 0; j < c; ++j) {
                 const double d = gy[j] * gi->data[j];
                 s1 += d;
                 s2 += d * h[j];
               }
               const double inv = (*inv_std)[r];
               for (std::size_t j = 0; j < c; ++j) {
                 const double d = gy[j] * gi->data[j];
                 gx[r * c + j] += inv / n * (n * d - s1 - h[j] * s2);
               }
             }
           }
         });
  return out;
}

Tensor l2_normalize_rows(const Tensor& x) {
  require_defined(x, "l2_normalize_rows");
  const std::size_t c = last_extent(x);
  const std::size_t rows = x.numel() / c;
  auto norms = std::make_shared<std::vector<double>>(rows);
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += xv[r * c + j] * xv[r * c + j];
    const double nrm = std::sqrt(s);
    (*norms)[r] = nrm;
    if (nrm > 0.0) {
      for (std::size_t j = 0; j < c; ++j) o[r * c + j] = xv[r * c + j] / nrm;
    }
  }
  finish("l2_normalize_rows", out, {&x}, [xi = x.impl(), oi = out.impl(), norms, rows, c](std::span<const double> g) {
    auto gx = input_grad(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      const double nrm = (*norms)[r];
      if (nrm == 0.0) continue;
      const double* y = oi->data.data() + r * c;
      const double* gy = g.data() + r * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += y[j] * gy[j];
      for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += (gy[j] - y[j] * dot) / nrm;
    }
  });
  return out;
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
  require_same_shape(u, v, "cosine_similarity");
  const Shape row{1, u.numel()};
  return sum(mul(l2_normalize_rows(reshape(u, row)), l2_normalize_rows(reshape(v, row))));
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (kernel == 0 || stride == 0) throw DimensionError("convolution kernel and stride must be positive");
  if (in + 2 * pad < kernel) {
    throw DimensionError("convolution kernel " + std::to_string(kernel) + " exceeds padded extent " +
                         std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

Tensor conv1d_temporal(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t padding) {
  require_defined(x, "conv1d_temporal");
  require_defined(weight, "conv1d_temporal");
  if (x.rank() != 3 || weight.rank() != 3 || weight.dim(1) != x.dim(2)) {
    throw DimensionError("conv1d_temporal: input " + shape_string(x.shape()) + " incompatible with kernel " +
                         shape_string(weight.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t t_in = x.dim(1);
  const std::size_t cin = x.dim(2);
  const std::size_t width = weight.dim(0);
  const std::size_t cout = weight.dim(2);
  const std::size_t t_out = conv_output_extent(t_in, width, 1, padding);
  if (bias.defined() && bias.numel() != cout) throw DimensionError("conv1d_temporal: bias extent mismatch");
  Tensor out(Shape{batch, t_out, cout});
  auto o = out.mutable_data();
  if (bias.defined()) {
    for (std::size_t r = 0; r < batch * t_out; ++r) std::copy_n(bias.data().data(), cout, o.data() + r * cout);
  }
  // Output rows [t0, t1) read input rows t + k - padding.
  auto range = [t_in, t_out, padding](std::size_t k) {
    const std::size_t t0 = padding > k ? padding - k : 0;
    const std::size_t t1 = std::min(t_out, t_in + padding - k);
    return std::pair{t0, t1};
  };
  const double* xv = x.data().data();
  const double* wv = weight.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < width; ++k) {
      auto [t0, t1] = range(k);
      if (t1 <= t0) continue;
      const std::size_t s0 = t0 + k - padding;
      gemm(xv + (b * t_in + s0) * cin, false, wv + k * cin * cout, false, o.data() + (b * t_out + t0) * cout, t1 - t0,
           cout, cin, true);
    }
  }
  finish("conv1d_temporal", out, {&x, &weight, &bias},
         [xi = x.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : ImplPtr{}, batch, t_in, t_out, cin,
          cout, width, range, padding](std::span<const double> g) {
           auto gx = input_grad(xi);
           auto gw = input_grad(wi);
           auto gb = input_grad(bi);
           for (std::size_t b = 0; b < batch; ++b) {
             for (std::size_t k = 0; k < width; ++k) {
               auto [t0, t1] = range(k);
               if (t1 <= t0) continue;
               const std::size_t s0 = t0 + k - padding;
               const double* gy = g.data() + (b * t_out + t0) * cout;
               if (!gx.empty()) {
                 gemm(gy, false, wi->data.data() + k * cin * cout, true, gx.data() + (b * t_in + s0) * cin, t1 - t0,
                      cin, cout, true);
               }
               if (!gw.empty()) {
                 gemm(xi->data.data() + (b * t_in + s0) * cin, true, gy, false, gw.data() + k * cin * cout, cin, cout,
                      t1 - t0, true);
               }
             }
           }
           if (!gb.empty()) {
             for (std::size_t r = 0; r < batch * t_out; ++r) {
               for (std::size_t j = 0; j < cout; ++j) gb[j] += g[r * cout + j];
             }
           }
         });
  return out;
}

namespace {

struct ConvPlan {
  std::size_t cin, h, w, kh, kw, ho, wo;
  Conv2dGeometry geo;
};

// cols: (cin*kh*kw) x (ho*wo) for one image.
void im2col(const double* img, const ConvPlan& p, double* cols) {
  const std::size_t plane = p.ho * p.wo;
  for (std::size_t c = 0; c < p.cin; ++c) {
    for (std::size_t i = 0; i < p.kh; ++i) {
      for (std::size_t j = 0; j < p.kw; ++j) {
        double* row = cols + ((c * p.kh + i) * p.kw + j) * plane;
        for (std::size_t y = 0; y < p.ho; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y * p.geo.stride_h + i) -
                                    static_cast<std::ptrdiff_t>(p.geo.pad_h);
          double* dst = row + y * p.wo;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(p.h)) {
            std::fill_n(dst, p.wo, 0.0);
            continue;
          }
          const double* src = img + (c * p.h + static_cast<std::size_t>(sy)) * p.w;
          for (std::size_t x = 0; x < p.wo; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x * p.geo.stride_w + j) -
                                      static_cast<std::ptrdiff_t>(p.geo.pad_w);
            dst[x] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(p.w)) ? 0.0 : src[sx];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvPlan& p, double* img) {
  const std::size_t plane = p.ho * p.wo;
  for (std::size_t c = 0; c < p.cin; ++c) {
    for (std::size_t i = 0; i < p.kh; ++i) {
      for (std::size_t j = 0; j < p.kw; ++j) {
        const double* row = cols + ((c * p.kh + i) * p.kw + j) * plane;
        for (std::size_t y = 0; y < p.ho; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y * p.geo.stride_h + i) -
                                    static_cast<std::ptrdiff_t>(p.geo.pad_h);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(p.h)) continue;
          double* dst = img + (c * p.h + static_cast<std::size_t>(sy)) * p.w;
          const double* src = row + y * p.wo;
          for (std::size_t x = 0; x < p.wo; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x * p.geo.stride_w + j) -
                                      static_cast<std::ptrdiff_t>(p.geo.pad_w);
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(p.w)) dst[sx] += src[x];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const Conv2dGeometry& geometry) {
  require_defined(x, "conv2d");
  require_defined(weight, "conv2d");
  if (x.rank() != 4 || weight.rank() != 4 || weight.dim(1) != x.dim(1)) {
    throw DimensionError("conv2d: input " + shape_string(x.shape()) + " incompatible with kernel " +
                         shape_string(weight.shape()));
  }
  ConvPlan p{};
  p.cin = x.dim(1);
  p.h = x.dim(2);
  p.w = x.dim(3);
  p.kh = weight.dim(2);
  p.kw = weight.dim(3);
  p.geo = geometry;
  p.ho = conv_output_extent(p.h, p.kh, geometry.stride_h, geometry.pad_h);
  p.wo = conv_output_extent(p.w, p.kw, geometry.stride_w, geometry.pad_w);
  const std::size_t batch = x.dim(0);
  const std::size_t cout = weight.dim(0);
  if (bias.defined() && bias.numel() != cout) throw DimensionError("conv2d: bias extent mismatch");
  const std::size_t patch = p.cin * p.kh * p.kw;
  const std::size_t plane = p.ho * p.wo;
  auto cols = std::make_shared<std::vector<double>>(batch * patch * plane);
  Tensor out(Shape{batch, cout, p.ho, p.wo});
  auto o = out.mutable_data();
  const double* xv = x.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    double* cb = cols->data() + b * patch * plane;
    im2col(xv + b * p.cin * p.h * p.w, p, cb);
    double* ob = o.data() + b * cout * plane;
    if (bias.defined()) {
      for (std::size_t c = 0; c < cout; ++c) std::fill_n(ob + c * plane, plane, bias.data()[c]);
    }
    gemm(weight.data().data(), false, cb, false, ob, cout, plane, patch, bias.defined());
  }
  finish("conv2d", out, {&x, &weight, &bias},
         [xi = x.impl(), wi = weight.impl(), bi = bias.defined() ? bias.impl() : ImplPtr{}, cols, p, batch, cout,
          patch, plane](std::span<const double> g) {
           auto gx = input_grad(xi);
           auto gw = input_grad(wi);
           auto gb = input_grad(bi);
           std::vector<double> dcols(gx.empty() ? 0 : patch * plane);
           for (std::size_t b = 0; b < batch; ++b) {
             const double* gy = g.data() + b * cout * plane;
             const double* cb = cols->data() + b * patch * plane;
             if (!gw.empty()) gemm(gy, false, cb, true, gw.data(), cout, patch, plane, true);
             if (!gx.empty()) {
               gemm(wi->data.data(), true, gy, false, dcols.data(), patch, plane, cout, false);
               col2im(dcols.data(), p, gx.data() + b * p.cin * p.h * p.w);
             }
             if (!gb.empty()) {
               for (std::size_t c = 0; c < cout; ++c) {
                 double s = 0.0;
                 for (std::size_t i = 0; i < plane; ++i) s += gy[c * plane + i];
                 gb[c] += s;
               }
             }
           }
         });
  return out;
}

Tensor stop_gradient(const Tensor& x) {
  require_defined(x, "stop_gradient");
  std::vector<double> values(x.data().begin(), x.data().end());
  if (auto* cache = active_detached_cache()) values = cache->pass(std::move(values));
  return Tensor(x.shape(), std::move(values));
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  require_defined(logits, "cross_entropy");
  if (logits.rank() != 2 || labels.size() != logits.dim(0)) {
    throw DimensionError("cross_entropy: need one label per logit row, got " + shape_string(logits.shape()));
  }
  for (auto l : labels) {
    if (l >= logits.dim(1)) throw ContractError("cross_entropy: label " + std::to_string(l) + " out of range");
  }
  return scale(mean(pick(log_softmax_rows(logits), labels)), -1.0);
}

}  // namespace flaming
