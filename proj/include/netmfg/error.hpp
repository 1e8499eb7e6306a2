#pragma once

#include <stdexcept>
#include <string>

namespace netmfg {

// Invalid network, grid or problem description.
class ModelError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// A solver failed to converge or detected an inconsistent discrete system.
class SolverError : public std::runtime_error {
public:
  SolverError(const std::string& what, double last_residual = 0.0)
      : std::runtime_error(what), last_residual_(last_residual) {}

  double last_residual() const noexcept { return last_residual_; }

private:
  double last_residual_;
};

} // namespace netmfg
