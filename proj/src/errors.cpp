#include "ephemyarn/errors.hpp"

#include <array>
#include <utility>

namespace ephemyarn {

namespace {

constexpr std::array<std::pair<ErrorCode, const char*>, 19> kNames{{
    {ErrorCode::EmptyAllocation, "EmptyAllocation"},
    {ErrorCode::MalformedEntry, "MalformedEntry"},
    {ErrorCode::MissingEnv, "MissingEnv"},
    {ErrorCode::InsufficientNodes, "InsufficientNodes"},
    {ErrorCode::InvalidRoots, "InvalidRoots"},
    {ErrorCode::InvalidConfig, "InvalidConfig"},
    {ErrorCode::Unsatisfiable, "Unsatisfiable"},
    {ErrorCode::UnknownNode, "UnknownNode"},
    {ErrorCode::AlreadyRegistered, "AlreadyRegistered"},
    {ErrorCode::ReRegisterRequired, "ReRegisterRequired"},
    {ErrorCode::NoWorkers, "NoWorkers"},
    {ErrorCode::NotFound, "NotFound"},
    {ErrorCode::OutputExists, "OutputExists"},
    {ErrorCode::ClusterUnavailable, "ClusterUnavailable"},
    {ErrorCode::MissingInput, "MissingInput"},
    {ErrorCode::MalformedRecord, "MalformedRecord"},
    {ErrorCode::LaunchFailed, "LaunchFailed"},
    {ErrorCode::Protocol, "Protocol"},
    {ErrorCode::Internal, "Internal"},
}};

}  // namespace

const char* error_code_name(ErrorCode code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Internal";
}

ErrorCode error_code_from_name(const std::string& name) {
  for (const auto& [c, n] : kNames) {
    if (name == n) return c;
  }
  return ErrorCode::Internal;
}

}  // namespace ephemyarn
