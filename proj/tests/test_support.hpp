#pragma once

#include <functional>
#include <random>

#include "flaming/gradcheck.hpp"
#include "flaming/model.hpp"
#include "flaming/ops.hpp"

namespace flaming::testing {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

// Small enough for exhaustive finite differences, large enough to exercise
// every path (two conv stages, two blocks, both relation paths).
inline ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.backbone.in_height = 16;
  cfg.backbone.in_width = 24;
  cfg.backbone.widths = {3, 4};
  cfg.backbone.channels = 4;
  cfg.encoder.tokens = 3;
  cfg.encoder.blocks = 2;
  cfg.encoder.heads = 2;
  cfg.relation.frames = 3;
  cfg.relation.heads = 2;
  cfg.relation.conv2d_layers = 1;
  cfg.init_seed = 11;
  return cfg;
}

// Values of every parameter, by handle, in store order.
inline std::vector<Tensor> all_params(const ParamStore& store) { return store.tensors(); }

inline Tensor grad_of(const Tensor& t) { return Tensor(t.shape(), std::vector<double>(t.grad().begin(), t.grad().end())); }

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace flaming::testing
