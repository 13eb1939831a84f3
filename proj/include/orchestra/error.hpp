#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace orchestra {

enum class ErrorKind {
  // core-trace
  AlreadyFinalized,
  IndexGap,
  PendingToolCall,
  MalformedRecord,
  // marker-protocol
  BadToolName,
  // registry
  DuplicateName,
  BadEndpoint,
  SchemaViolation,
  UnknownTool,
  // backends
  Timeout,
  RateLimited,
  ProtocolError,
  Unreachable,
  NoScriptMatch,
  // engine
  BudgetExhausted,
  MissingAnswerBlock,
  MalformedGeneration,
  // agents
  NonSelectRejected,
  ExecutionFailed,
  SchemaUnavailable,
  EmptyCorpus,
  ProviderUnavailable,
  FetchTimeout,
  TimeLimit,
  MemoryLimit,
  NonZeroExit,
  EmptySeries,
  RemoteError,
  // evalharness
  EmptyList,
  LengthMismatch,
  EmptyMatrix,
  // plumbing
  InvalidArgument,
  Io,
  NetworkForbidden,
};

std::string_view to_string(ErrorKind kind);

/// Exception carrying a classified failure. Every component throws this type;
/// the C API maps `kind()` onto status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace orchestra
