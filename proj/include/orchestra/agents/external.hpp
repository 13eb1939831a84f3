#pragma once

#include <string>
#include <string_view>

#include "orchestra/agents/agent.hpp"
#include "orchestra/error.hpp"
#include "orchestra/net.hpp"

namespace orchestra {

class RemoteError : public Error {
 public:
  RemoteError(int status, std::string body)
      : Error(ErrorKind::RemoteError, "remote tool returned HTTP " + std::to_string(status) +
                                          (body.empty() ? "" : ": " + body.substr(0, 512))),
        status_(status),
        body_(std::move(body)) {}
  int status() const { return status_; }
  const std::string& body() const { return body_; }

 private:
  int status_;
  std::string body_;
};

/// Bridge to a tool served over HTTP: POST {"query": payload} and expect
/// 200 {"result": text}. Non-string results are returned as compact JSON.
class ExternalAgent : public Agent {
 public:
  /// Throws BadEndpoint for a malformed URL.
  ExternalAgent(const std::string& endpoint, int timeout_ms);

  /// Throws Timeout, RemoteError, Unreachable or ProtocolError.
  std::string invoke(std::string_view payload, const InvocationContext& context) override;

 private:
  net::Url url_;
  int timeout_ms_;
};

}  // namespace orchestra
