#pragma once

#include <cmath>
#include <vector>

#include "flaming/tensor.hpp"

// Brute-force pairwise enumerations of the contrastive losses, written
// independently of src/losses.cpp and used as its oracle.
namespace flaming::oracle {

using Rows = std::vector<std::vector<double>>;

inline Rows rows_of(const Tensor& t, std::size_t offset_rows = 0, std::size_t count = 0) {
  const std::size_t cols = t.shape().back();
  const std::size_t total = t.numel() / cols;
  if (count == 0) count = total - offset_rows;
  Rows out(count, std::vector<double>(cols));
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r][c] = t.at((offset_rows + r) * cols + c);
  }
  return out;
}

inline double cos_sim(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

// -log(h(u_i, v_i) / sum_{j != i} h(u_i, v_j)), enumerated pair by pair.
inline double pair_term(const Rows& u, const Rows& v, std::size_t i, double tau) {
  const double pos = std::exp(cos_sim(u[i], v[i]) / tau);
  double neg = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (j != i) neg += std::exp(cos_sim(u[i], v[j]) / tau);
  }
  return -std::log(pos / neg);
}

inline double flm_oracle(const std::vector<Rows>& att, const Rows& m, double tau) {
  double acc = 0.0;
  for (const auto& a : att) {
    double block = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) block += pair_term(a, m, i, tau);
    acc += block / static_cast<double>(m.size());
  }
  return acc / static_cast<double>(att.size());
}

inline double tco_oracle(const Tensor& w, double tau) {
  const std::size_t t_count = w.dim(0), m = w.dim(1);
  double acc = 0.0;
  for (std::size_t t = 0; t + 1 < t_count; ++t) {
    const Rows a = rows_of(w, t * m, m), b = rows_of(w, (t + 1) * m, m);
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += pair_term(a, b, i, tau) + pair_term(b, a, i, tau);
    acc += s / static_cast<double>(m);
  }
  return acc / static_cast<double>(t_count - 1);
}

inline Tensor from_rows(const Rows& r) {
  std::vector<double> v;
  for (const auto& row : r) v.insert(v.end(), row.begin(), row.end());
  return Tensor({r.size(), r[0].size()}, std::move(v));
}

}  // namespace flaming::oracle
