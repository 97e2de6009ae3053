#pragma once

#include <stdexcept>

namespace gridrisk {

// Bad parameter values or malformed configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input data that fails validation (unknown ids, shape mismatches, corrupt files).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operation called on an object that is not in the required state,
// e.g. sampling against a corpus that was never classified.
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller broke an API precondition. Programming error, not an input problem.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// Sampling distribution has a parameter at 0 or 1 where the likelihood
// ratio would be undefined.
struct DegenerateDistribution : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// No sample carried weighted overload mass, so the importance-sampling
// update has a zero denominator.
struct EliteSetEmpty : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gridrisk
