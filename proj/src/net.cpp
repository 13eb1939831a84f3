#include "orchestra/net.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>

#include "orchestra/error.hpp"
#include "orchestra/text.hpp"

namespace orchestra::net {

namespace {

std::atomic<Policy> g_policy{Policy::Allow};
std::atomic<std::size_t> g_attempted{0};
std::atomic<std::size_t> g_refused{0};

void guard(const Url& url) {
  ++g_attempted;
  const Policy p = g_policy.load();
  if (p == Policy::Allow || (p == Policy::LoopbackOnly && url.is_loopback())) return;
  ++g_refused;
  throw Error(ErrorKind::NetworkForbidden, "network access to " + url.origin() + " is disabled");
}

std::unique_ptr<httplib::Client> make_client(const Url& url, int timeout_ms) {
  auto client = std::make_unique<httplib::Client>(url.origin());
  const auto secs = timeout_ms / 1000;
  const auto usecs = (timeout_ms % 1000) * 1000;
  client->set_connection_timeout(secs, usecs);
  client->set_read_timeout(secs, usecs);
  client->set_write_timeout(secs, usecs);
  // Redirects would bypass the guard, so they are returned as-is.
  client->set_follow_location(false);
  return client;
}

[[noreturn]] void raise(httplib::Error err, const Url& url, std::chrono::steady_clock::duration elapsed,
                        int timeout_ms) {
  const std::string where = url.origin() + url.path;
  switch (err) {
    case httplib::Error::ConnectionTimeout:
      throw Error(ErrorKind::Timeout, "connection to " + where + " timed out");
    case httplib::Error::Read:
    case httplib::Error::Write:
      if (elapsed >= std::chrono::milliseconds(timeout_ms) * 9 / 10) {
        throw Error(ErrorKind::Timeout, "request to " + where + " timed out after " + std::to_string(timeout_ms) + " ms");
      }
      throw Error(ErrorKind::ProtocolError, "I/O error talking to " + where);
    case httplib::Error::Connection:
    case httplib::Error::SSLConnection:
    case httplib::Error::ProxyConnection:
      throw Error(ErrorKind::Unreachable, "cannot connect to " + where);
    default:
      throw Error(ErrorKind::ProtocolError, "request to " + where + " failed: " + httplib::to_string(err));
  }
}

Response convert(const httplib::Response& r) {
  Response out;
  out.status = r.status;
  out.body = r.body;
  for (const auto& [k, v] : r.headers) out.headers[text::to_lower(k)] = v;
  return out;
}

httplib::Headers to_headers(const std::map<std::string, std::string>& h) {
  httplib::Headers out;
  for (const auto& [k, v] : h) out.emplace(k, v);
  return out;
}

}  // namespace

std::optional<Url> Url::parse(std::string_view s) {
  Url u;
  const auto sep = s.find("://");
  if (sep == std::string_view::npos) return std::nullopt;
  u.scheme = text::to_lower(s.substr(0, sep));
  if (u.scheme != "http" && u.scheme != "https") return std::nullopt;
  std::string_view rest = s.substr(sep + 3);
  const auto slash = rest.find_first_of("/?");
  std::string_view authority = rest.substr(0, slash);
  u.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  if (!u.path.empty() && u.path.front() == '?') u.path = "/" + u.path;
  if (authority.empty() || authority.find('@') != std::string_view::npos) return std::nullopt;

  u.port = u.scheme == "https" ? 443 : 80;
  std::string_view host = authority;
  if (authority.front() == '[') {
    const auto close = authority.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    host = authority.substr(0, close + 1);
    authority.remove_prefix(close + 1);
    if (!authority.empty()) {
      if (authority.front() != ':') return std::nullopt;
      authority.remove_prefix(1);
    } else {
      authority = {};
    }
  } else if (const auto colon = authority.rfind(':'); colon != std::string_view::npos) {
    host = authority.substr(0, colon);
    authority = authority.substr(colon + 1);
    if (authority.empty()) return std::nullopt;
  } else {
    authority = {};
  }
  if (!authority.empty()) {
    int port = 0;
    for (char c : authority) {
      if (c < '0' || c > '9') return std::nullopt;
      port = port * 10 + (c - '0');
      if (port > 65535) return std::nullopt;
    }
    if (port == 0) return std::nullopt;
    u.port = port;
  }
  if (host.empty()) return std::nullopt;
  for (char c : host) {
    if (c == ' ' || c == '\t' || c == '\n') return std::nullopt;
  }
  u.host = std::string(host);
  return u;
}

std::string Url::origin() const { return scheme + "://" + host + ":" + std::to_string(port); }

bool Url::is_loopback() const {
  return host == "localhost" || host == "[::1]" || host.starts_with("127.");
}

void set_policy(Policy p) { g_policy = p; }
Policy policy() { return g_policy.load(); }
std::size_t attempted_requests() { return g_attempted.load(); }
std::size_t refused_requests() { return g_refused.load(); }
void reset_counters() {
  g_attempted = 0;
  g_refused = 0;
}

Response post_json(const Url& url, const std::string& body, const std::map<std::string, std::string>& headers,
                   int timeout_ms) {
  guard(url);
  auto client = make_client(url, timeout_ms);
  const auto start = std::chrono::steady_clock::now();
  auto res = client->Post(url.path, to_headers(headers), body, "application/json");
  if (!res) raise(res.error(), url, std::chrono::steady_clock::now() - start, timeout_ms);
  return convert(*res);
}

Response get(const Url& url, const std::map<std::string, std::string>& headers, int timeout_ms) {
  guard(url);
  auto client = make_client(url, timeout_ms);
  const auto start = std::chrono::steady_clock::now();
  auto res = client->Get(url.path, to_headers(headers));
  if (!res) raise(res.error(), url, std::chrono::steady_clock::now() - start, timeout_ms);
  return convert(*res);
}

bool reachable(const Url& url, int timeout_ms) {
  guard(url);
  httplib::Client client(url.origin());
  client.set_connection_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
  client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
  // Any HTTP answer, even 404, proves the endpoint is up.
  auto res = client.Head("/");
  return static_cast<bool>(res) || res.error() == httplib::Error::Read;
}

}  // namespace orchestra::net
