#pragma once

#include <stdexcept>
#include <string>

namespace chaosbench {

// Base class for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed model, grid or experiment configuration (including dimension mismatches).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tabulated field queried outside its grid.
class ExtrapolationError : public Error {
 public:
  using Error::Error;
};

// Empty ensembles, mismatched grids, indices out of range.
class InputError : public Error {
 public:
  using Error::Error;
};

// Estimator applied to paths that were not simulated under the law it assumes.
class MisuseError : public Error {
 public:
  using Error::Error;
};

class EstimationFailure : public Error {
 public:
  using Error::Error;
};

class CoverageFailure : public Error {
 public:
  using Error::Error;
};

class PreconditionFailure : public Error {
 public:
  using Error::Error;
};

class SimulationBlowUp : public Error {
 public:
  SimulationBlowUp(std::size_t replica, std::size_t node, const std::string& what)
      : Error("simulation blow-up at replica " + std::to_string(replica) + ", time node " +
              std::to_string(node) + ": " + what),
        replica_(replica),
        node_(node) {}

  std::size_t replica() const noexcept { return replica_; }
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t replica_;
  std::size_t node_;
};

}  // namespace chaosbench
