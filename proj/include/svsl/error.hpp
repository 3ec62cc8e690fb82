#pragma once

#include <stdexcept>
#include <string>

namespace svsl {

// Broken input contract: shape mismatch, out-of-range index, invalid
// configuration value. Callers that hit this have a bug or bad config.
struct ContractViolation : std::invalid_argument {
  explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

// An external file (config, IDX, CSV, snapshot, metrics) could not be parsed.
// The message carries the location: line number or byte offset.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// A training run had to stop, e.g. the loss went non-finite. The message
// names the epoch and batch.
struct TrainingAbort : std::runtime_error {
  explicit TrainingAbort(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace svsl
