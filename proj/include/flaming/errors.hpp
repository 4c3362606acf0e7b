#pragma once

#include <stdexcept>
#include <string>

namespace flaming {

// Caller violated an operation's precondition (scalar loss, stale tape, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Tensor extents are incompatible with the requested operation.
struct DimensionError : ContractError {
  using ContractError::ContractError;
};

// Invalid configuration value or combination of values.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File-level failures: missing, truncated or malformed tensor files.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Well-formed file with content that does not match the expected schema.
struct SchemaError : IoError {
  using IoError::IoError;
};

// A differentiable op produced NaN or Inf.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace flaming
