#pragma once

#include <span>
#include <stdexcept>
#include <string>

namespace ntkdip {

/// Shape or length disagreement between two arguments.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Input exceeds a hard size guard (dense materialization, Jacobian, ...).
struct SizeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Matrix fails a positive-semidefiniteness requirement.
struct NotPsdError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Operation requires full row rank and the input does not have it.
struct RankError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Step size violates the contraction condition; iteration would diverge.
struct DivergenceError : std::domain_error {
  using std::domain_error::domain_error;
};

/// A metric is undefined for the given inputs (e.g. all-zero reference).
struct MetricError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Training produced a non-finite loss.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

/// Pairwise (cascade) summation. Order-independent up to association,
/// used wherever a reduction must be reproducible to the last bit
/// regardless of how trials were scheduled.
double pairwise_sum(std::span<const double> xs);

}  // namespace ntkdip
