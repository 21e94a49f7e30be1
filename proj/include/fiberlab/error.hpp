#pragma once

#include <stdexcept>
#include <string>

namespace fiberlab {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  ok = 0,
  failure = 1,
  config = 2,
  divergence = 3,
  missing_artifact = 4,
};

/// Base of every error thrown by the library. Carries the exit code the CLI
/// should report when the error reaches the top level.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what, ExitCode code = ExitCode::failure)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

private:
  ExitCode code_;
};

/// Bad user input: malformed config, invalid parameter, inconsistent lengths.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::config) {}
};

/// Array length or layer width does not match what the operation requires.
class DimensionError : public Error {
public:
  explicit DimensionError(const std::string& what) : Error(what, ExitCode::config) {}
};

/// A numerical routine produced NaN/Inf.
class DivergenceError : public Error {
public:
  DivergenceError(const std::string& what, long long step = -1)
      : Error(what, ExitCode::divergence), step_(step) {}

  long long step() const noexcept { return step_; }

private:
  long long step_;
};

/// A required file or model is absent.
class MissingArtifactError : public Error {
public:
  explicit MissingArtifactError(const std::string& what)
      : Error(what, ExitCode::missing_artifact) {}
};

/// A serialized payload is truncated, has the wrong magic, or an unknown version.
class CorruptionError : public Error {
public:
  explicit CorruptionError(const std::string& what) : Error(what, ExitCode::missing_artifact) {}
};

}  // namespace fiberlab
