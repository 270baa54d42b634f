#pragma once

#include <stdexcept>

namespace kodm {

/// Malformed or inconsistent run configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed data files, format violations, stale caches (CLI exit code 3).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure: divergence, non-convergence, non-finite state (CLI exit code 4).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace kodm
