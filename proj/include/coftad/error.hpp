#pragma once

#include <stdexcept>
#include <string>

namespace coftad {

/// Process exit codes used by the command line tool.
enum class ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kData = 3,
  kNumerical = 4,
};

/// Base class for all library errors. Carries the exit code the CLI maps it to.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code = ExitCode::kFailure)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::kConfig) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, ExitCode::kData) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what, ExitCode::kNumerical) {}
};

/// A caller broke an API precondition (wrong depth for a network, bad shapes, ...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(what, ExitCode::kFailure) {}
};

/// Checkpoint could not be read or does not match the architecture.
class CheckpointError : public Error {
 public:
  explicit CheckpointError(const std::string& what) : Error(what, ExitCode::kData) {}
};

}  // namespace coftad
