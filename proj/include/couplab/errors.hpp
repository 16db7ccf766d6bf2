#pragma once

#include <stdexcept>
#include <string>

namespace couplab {

// Fixed-point or Monte Carlo procedure failed to reach its tolerance.
struct ConvergenceFailure : std::runtime_error {
    explicit ConvergenceFailure(const std::string& what) : std::runtime_error(what) {}
};

// Probability mass escaping the truncated grid exceeds the allowed leak.
struct TruncationError : std::runtime_error {
    explicit TruncationError(const std::string& what) : std::runtime_error(what) {}
};

// A density or likelihood evaluation fell below the representable floor.
struct EvaluationRangeError : std::runtime_error {
    explicit EvaluationRangeError(const std::string& what) : std::runtime_error(what) {}
};

// Experiment or file configuration is invalid.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Bookkeeping of consumed Brownian stretches failed an exactness audit.
struct LedgerCorruption : std::runtime_error {
    explicit LedgerCorruption(const std::string& what) : std::runtime_error(what) {}
};

// A sampled variable violated its declared support bound.
struct BoundViolation : std::runtime_error {
    explicit BoundViolation(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace couplab
