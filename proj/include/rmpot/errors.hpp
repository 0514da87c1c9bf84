#pragma once

#include <stdexcept>
#include <string>

namespace rmpot {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct ParseError : Error {
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct UnknownKind : Error {
  using Error::Error;
};

struct PreconditionError : Error {
  using Error::Error;
};

struct EmptyExemplars : PreconditionError {
  EmptyExemplars() : PreconditionError("in-context reformulation needs at least one exemplar") {}
  using PreconditionError::PreconditionError;
};

// Any failure reaching or talking to the LLM provider.
struct GatewayError : Error {
  using Error::Error;
};

struct TransportError : GatewayError {
  using GatewayError::GatewayError;
};

struct ProviderError : GatewayError {
  ProviderError(int status, const std::string& message)
      : GatewayError("provider returned HTTP " + std::to_string(status) + ": " + message),
        status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct CacheCorruption : GatewayError {
  using GatewayError::GatewayError;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct DuplicateId : Error {
  using Error::Error;
};

}  // namespace rmpot
