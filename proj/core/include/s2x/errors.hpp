#pragma once

#include <stdexcept>
#include <string>

namespace s2x {

// Shape mismatches between tensors (matmul inner dims, broadcast failures, ...).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid argument values: eps <= 0, even conv kernels, out-of-range ratios.
struct ParamError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API contract violations: backward on a non-scalar, empty visible token set.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An op produced NaN or Inf. Message names the op and the input shapes.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed container files. Message carries the byte offset of the problem.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Config parse failures, including unknown keys.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace s2x
