#pragma once

#include <stdexcept>

namespace hypcd {

// Error categories surfaced by the harness. Math-level domain violations
// (points outside the ball, arctanh past 1) use std::domain_error instead.

/// Invalid or inconsistent configuration. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files or dataset invariants violated. CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient during optimisation. CLI exit code 4.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hypcd
