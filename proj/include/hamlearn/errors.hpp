#pragma once

#include <stdexcept>
#include <string>

namespace hamlearn {

// Failures that callers (notably the CLI) need to tell apart. Plain
// precondition violations use std::invalid_argument / std::out_of_range.

/// Invalid or unknown configuration keys/values.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Filesystem read/write failure.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed container: bad magic, version mismatch, truncated body, CRC mismatch.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
public:
  DivergenceError(const std::string& what, int stage, int epoch)
      : std::runtime_error(what), stage_(stage), epoch_(epoch) {}

  int stage() const noexcept { return stage_; }
  int epoch() const noexcept { return epoch_; }

private:
  int stage_;
  int epoch_;
};

/// A predictor was applied to data produced under a different family,
/// sampling grid or set of initial states.
class MetadataMismatch : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace hamlearn
