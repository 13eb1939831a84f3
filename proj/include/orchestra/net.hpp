#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>

// HTTP plumbing shared by the chat-completions backend, the external tool
// adapter and the web page fetcher. Every outbound request passes through a
// process-wide guard so tests can prove that offline runs stay offline.
namespace orchestra::net {

struct Url {
  std::string scheme;  // "http" or "https"
  std::string host;
  int port = 0;
  std::string path;  // starts with '/', includes any query string

  static std::optional<Url> parse(std::string_view text);
  std::string origin() const;
  bool is_loopback() const;
};

enum class Policy { Allow, LoopbackOnly, Deny };

void set_policy(Policy policy);
Policy policy();

/// Requests attempted since process start (or the last reset), and how many
/// of those the guard refused.
std::size_t attempted_requests();
std::size_t refused_requests();
void reset_counters();

/// Sets a policy for the lifetime of the object, restoring the old one after.
class ScopedPolicy {
 public:
  explicit ScopedPolicy(Policy p) : previous_(policy()) { set_policy(p); }
  ~ScopedPolicy() { set_policy(previous_); }
  ScopedPolicy(const ScopedPolicy&) = delete;
  ScopedPolicy& operator=(const ScopedPolicy&) = delete;

 private:
  Policy previous_;
};

struct Response {
  int status = 0;
  std::string body;
  std::map<std::string, std::string> headers;  // lowercase names
};

/// Throws NetworkForbidden, Timeout, Unreachable or ProtocolError. HTTP error
/// statuses are returned, not thrown.
Response post_json(const Url& url, const std::string& body, const std::map<std::string, std::string>& headers,
                   int timeout_ms);
Response get(const Url& url, const std::map<std::string, std::string>& headers, int timeout_ms);

/// TCP reachability of the URL's host and port.
bool reachable(const Url& url, int timeout_ms);

}  // namespace orchestra::net
