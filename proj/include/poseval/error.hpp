#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace poseval {

enum class ErrorKind {
  InvalidArgument,
  ParseError,
  MissingVisibility,
  UnknownObject,
  EmptyFile,
  DuplicateKey,
  NonPositiveDepth,
  DegenerateMesh,
  OutcomeModelUnavailable,
  ProtocolError,
  ConfigError,
  EmptyGroup,
  DegenerateRange,
};

std::string_view to_string(ErrorKind kind);

// All library failures are reported through this type; `kind()` carries the
// taxonomy, `what()` carries file/key/row context.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::MissingVisibility: return "MissingVisibility";
    case ErrorKind::UnknownObject: return "UnknownObject";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::DuplicateKey: return "DuplicateKey";
    case ErrorKind::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorKind::DegenerateMesh: return "DegenerateMesh";
    case ErrorKind::OutcomeModelUnavailable: return "OutcomeModelUnavailable";
    case ErrorKind::ProtocolError: return "ProtocolError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::EmptyGroup: return "EmptyGroup";
    case ErrorKind::DegenerateRange: return "DegenerateRange";
  }
  return "Unknown";
}

// Point-behind-camera failure carries the offending vertex so callers can
// report it alongside the sentinel value.
class NonPositiveDepthError : public Error {
 public:
  NonPositiveDepthError(std::size_t vertex_index, double depth)
      : Error(ErrorKind::NonPositiveDepth,
              "vertex " + std::to_string(vertex_index) + " has depth " + std::to_string(depth)),
        vertex_index_(vertex_index) {}

  std::size_t vertex_index() const noexcept { return vertex_index_; }

 private:
  std::size_t vertex_index_;
};

}  // namespace poseval
