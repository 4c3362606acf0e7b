#pragma once

#include <functional>
#include <string>
#include <vector>

#include "flaming/tensor.hpp"

namespace flaming {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double tolerance = 0.0;
  bool passed = true;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor),
  // so coordinates whose true gradient is ~0 are judged on absolute error.
  double floor = 1e-6;
};

// Compares reverse-mode gradients of `loss_fn` w.r.t. `params` against central
// differences (f(p + h) - f(p - h)) / 2h. `loss_fn` must build its graph from
// the current parameter values on every call and be deterministic; two
// evaluations at the same point that differ raise ContractError. Outputs of
// stop_gradient are held at their unperturbed values throughout, so the
// numeric side differentiates the same function the tape does.
GradCheckReport finite_difference_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> params,
                                        const GradCheckOptions& options = {});

}  // namespace flaming
