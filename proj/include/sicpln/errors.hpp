#pragma once

#include <stdexcept>

namespace sicpln {

// Error taxonomy, mapped to CLI exit codes:
//   domain_error / parse_error -> 2 (invalid inputs or data files)
//   numeric_error              -> 3 (overflow, quadrature or factorization failure)
// Usage errors are handled by the CLI layer itself (exit code 1).

struct domain_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sicpln
