#include "orchestra/error.hpp"

namespace orchestra {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::AlreadyFinalized: return "AlreadyFinalized";
    case ErrorKind::IndexGap: return "IndexGap";
    case ErrorKind::PendingToolCall: return "PendingToolCall";
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::BadToolName: return "BadToolName";
    case ErrorKind::DuplicateName: return "DuplicateName";
    case ErrorKind::BadEndpoint: return "BadEndpoint";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::UnknownTool: return "UnknownTool";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::RateLimited: return "RateLimited";
    case ErrorKind::ProtocolError: return "ProtocolError";
    case ErrorKind::Unreachable: return "Unreachable";
    case ErrorKind::NoScriptMatch: return "NoScriptMatch";
    case ErrorKind::BudgetExhausted: return "BudgetExhausted";
    case ErrorKind::MissingAnswerBlock: return "MissingAnswerBlock";
    case ErrorKind::MalformedGeneration: return "MalformedGeneration";
    case ErrorKind::NonSelectRejected: return "NonSelectRejected";
    case ErrorKind::ExecutionFailed: return "ExecutionFailed";
    case ErrorKind::SchemaUnavailable: return "SchemaUnavailable";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorKind::FetchTimeout: return "FetchTimeout";
    case ErrorKind::TimeLimit: return "TimeLimit";
    case ErrorKind::MemoryLimit: return "MemoryLimit";
    case ErrorKind::NonZeroExit: return "NonZeroExit";
    case ErrorKind::EmptySeries: return "EmptySeries";
    case ErrorKind::RemoteError: return "RemoteError";
    case ErrorKind::EmptyList: return "EmptyList";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyMatrix: return "EmptyMatrix";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
    case ErrorKind::NetworkForbidden: return "NetworkForbidden";
  }
  return "Unknown";
}

}  // namespace orchestra
