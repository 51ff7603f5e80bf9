#pragma once

#include <stdexcept>
#include <string>

namespace ledits {

/// Invalid argument or configuration value (bad range, shape mismatch, empty subset).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated file (bad magic, dimension overflow).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Latent cache whose schedule/model fingerprint does not match the current run.
class StaleCacheError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Run-time failure of a generation or inversion loop (noise exhaustion, degenerate grid).
class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated internal invariant.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Failed acceptance-style assertion inside an experiment command.
class AssertionFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ledits
