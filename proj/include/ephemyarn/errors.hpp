#pragma once

#include <stdexcept>
#include <string>

namespace ephemyarn {

enum class ErrorCode {
  EmptyAllocation,
  MalformedEntry,
  MissingEnv,
  InsufficientNodes,
  InvalidRoots,
  InvalidConfig,
  Unsatisfiable,
  UnknownNode,
  AlreadyRegistered,
  ReRegisterRequired,
  NoWorkers,
  NotFound,
  OutputExists,
  ClusterUnavailable,
  MissingInput,
  MalformedRecord,
  LaunchFailed,
  Protocol,
  Internal,
};

const char* error_code_name(ErrorCode code);

/// Parses a code name back into the enum; returns Internal for unknown names
/// so errors received from newer peers still surface as errors.
ErrorCode error_code_from_name(const std::string& name);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ephemyarn
