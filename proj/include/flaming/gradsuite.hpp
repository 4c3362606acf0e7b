#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flaming/gradcheck.hpp"

namespace flaming {

struct GradSuiteOptions {
  std::uint64_t seed = 1;
  // Random shapes drawn per primitive op; the entry keeps the worst report.
  std::size_t op_trials = 20;
  GradCheckOptions check;
};

struct GradSuiteEntry {
  std::string name;
  GradCheckReport report;
};

// Finite-difference checks over every differentiable primitive, the attention
// layer, backbone, one encoder block, both relation paths under every detach
// mode, each loss term and the full composite objective on a tiny model.
std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& options = {});

}  // namespace flaming
