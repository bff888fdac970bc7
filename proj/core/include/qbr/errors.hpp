#pragma once
// Exception hierarchy for the qbusrep library. MIT licensed; see LICENSE.

#include <stdexcept>
#include <string>

namespace qbr {

// User-supplied configuration, state, or argument is invalid.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Configuration is structurally well-formed but describes a degenerate
// arrangement for which the requested quantity is undefined (for example a
// vanishing second interaction angle, which makes the tuning displacement
// divergent).
class SingularConfiguration : public ConfigError {
 public:
  explicit SingularConfiguration(const std::string& what) : ConfigError(what) {}
};

// An iterative numerical routine failed to reach its target accuracy.
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qbr
