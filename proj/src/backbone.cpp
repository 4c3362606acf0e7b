#include "flaming/backbone.hpp"

#include <cmath>

#include "flaming/errors.hpp"
#include "flaming/ops.hpp"

namespace flaming {

void BackboneConfig::validate() const {
  if (widths.empty()) throw ConfigError("backbone needs at least one stage");
  if (in_channels == 0 || channels == 0) throw ConfigError("backbone channel counts must be positive");
  for (auto w : widths) {
    if (w == 0) throw ConfigError("backbone stage widths must be positive");
  }
  const std::size_t factor = std::size_t{1} << widths.size();
  if (in_height % factor != 0 || in_width % factor != 0) {
    throw ConfigError("frame size " + std::to_string(in_height) + "x" + std::to_string(in_width) +
                      " is not divisible by 2^" + std::to_string(widths.size()));
  }
}

Backbone make_backbone(ParamStore& params, const std::string& prefix, const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  Backbone net;
  net.config = cfg;
  std::size_t in = cfg.in_channels;
  for (std::size_t s = 0; s < cfg.widths.size(); ++s) {
    const std::size_t out = cfg.widths[s];
    Tensor k = params.add(prefix + ".conv" + std::to_string(s) + ".w", {out, in, 3, 3});
    // He-uniform: these kernels feed a ReLU.
    init_uniform(k, std::sqrt(6.0 / static_cast<double>(in * 9)), rng);
    net.kernels.push_back(k);
    net.biases.push_back(params.add(prefix + ".conv" + std::to_string(s) + ".b", {out}));
    in = out;
  }
  net.compress_w = params.add(prefix + ".compress.w", {in, cfg.channels});
  init_uniform(net.compress_w, std::sqrt(1.0 / static_cast<double>(in)), rng);
  net.compress_b = params.add(prefix + ".compress.b", {cfg.channels});
  return net;
}

Tensor backbone_stages(const Backbone& net, const Tensor& frames) {
  const auto& cfg = net.config;
  if (frames.rank() != 4 || frames.dim(1) != cfg.in_channels || frames.dim(2) != cfg.in_height ||
      frames.dim(3) != cfg.in_width) {
    throw DimensionError("backbone expects [B, " + std::to_string(cfg.in_channels) + ", " +
                      std::to_string(cfg.in_height) + ", " + std::to_string(cfg.in_width) + "] frames, got " +
                      shape_string(frames.shape()));
  }
  const Conv2dGeometry geo{2, 2, 1, 1};
  Tensor x = frames;
  for (std::size_t s = 0; s < net.kernels.size(); ++s) x = relu(conv2d(x, net.kernels[s], net.biases[s], geo));
  return x;
}

Tensor extract_features(const Backbone& net, const Tensor& frames) {
  const Tensor x = backbone_stages(net, frames);  // [B, C0, H, W]
  const std::size_t b = x.dim(0), c0 = x.dim(1), hw = x.dim(2) * x.dim(3);
  const Tensor flat = permute(reshape(x, {b, c0, hw}), {0, 2, 1});  // [B, HW, C0]
  return linear(flat, net.compress_w, net.compress_b);
}

}  // namespace flaming
