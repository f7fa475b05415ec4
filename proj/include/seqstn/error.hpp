#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>

namespace seqstn {

/// Shape or dimension disagreement between operands.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Violated operation precondition (bad label, non-divisor factor, ...).
struct ValueError : std::runtime_error {
  explicit ValueError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed on-disk data (IDX, SQMN, CKPT, TNSR).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Canvas synthesis gave up; carries the example seed for replay.
struct GenerationError : std::runtime_error {
  uint64_t seed;
  GenerationError(const std::string& msg, uint64_t seed_)
      : std::runtime_error(msg + " (seed " + std::to_string(seed_) + ")"), seed(seed_) {}
};

/// Training aborted (non-finite loss); carries the batch seed for replay.
struct TrainingError : std::runtime_error {
  uint64_t batch_seed;
  TrainingError(const std::string& msg, uint64_t seed_)
      : std::runtime_error(msg), batch_seed(seed_) {}
};

}  // namespace seqstn
