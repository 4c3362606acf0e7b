#include "flaming/optim.hpp"

#include <cmath>
#include <string>

#include "flaming/errors.hpp"

namespace flaming {

void AdamConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("Adam eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
}

AdamState AdamState::for_params(const std::vector<Tensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.numel(), 0.0);
    s.v.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr, const AdamConfig& cfg) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ContractError("adam_step: learning rate must be finite and >= 0");
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adam_step: state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                        std::to_string(params.size()));
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.numel() || v.size() != p.numel()) {
      throw ContractError("adam_step: moment buffers of tensor " + std::to_string(i) + " do not match " +
                          shape_string(p.shape()));
    }
    const bool has_grad = p.has_grad();
    std::span<const double> g = has_grad ? p.grad() : std::span<const double>();
    auto w = p.mutable_data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      double gj = has_grad ? g[j] : 0.0;
      if (!cfg.decoupled) gj += cfg.weight_decay * w[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
      if (cfg.decoupled) w[j] -= lr * cfg.weight_decay * w[j];
      w[j] -= lr * update;
    }
  }
}

void ScheduleConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (warmup_epochs >= epochs) throw ConfigError("warmup_epochs must be below epochs");
  if (decay_start < warmup_epochs || decay_start >= epochs) {
    throw ConfigError("decay_start must lie in [warmup_epochs, epochs)");
  }
  if (!(lr_min > 0.0) || !(lr_peak > 0.0)) throw ConfigError("learning rates must be positive");
}

double lr_at(std::size_t epoch, const ScheduleConfig& cfg) {
  if (epoch > cfg.epochs) {
    throw ContractError("lr_at: epoch " + std::to_string(epoch) + " beyond " + std::to_string(cfg.epochs));
  }
  if (epoch <= cfg.warmup_epochs) {
    if (cfg.warmup_epochs == 0) return cfg.lr_peak;
    const double a = static_cast<double>(epoch) / static_cast<double>(cfg.warmup_epochs);
    return cfg.lr_min + a * (cfg.lr_peak - cfg.lr_min);
  }
  if (epoch <= cfg.decay_start) return cfg.lr_peak;
  const double a =
      static_cast<double>(cfg.epochs - epoch) / static_cast<double>(cfg.epochs - cfg.decay_start);
  return cfg.lr_peak * a;
}

}  // namespace flaming
