#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "orchestra/error.hpp"
#include "orchestra/net.hpp"
#include "orchestra/trace.hpp"

namespace orchestra {

struct GenerationRequest {
  std::vector<Message> messages;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;
  std::vector<std::string> stop_sequences;
  int max_tokens = 2048;

  /// Throws InvalidArgument: no messages, a stop sequence over 64 bytes, or
  /// a non-positive max_tokens.
  void validate() const;
};

struct StopReason {
  enum class Kind { StopSequence, Length, End };
  Kind kind = Kind::End;
  std::string matched;  // empty when the provider does not report which stop fired
};

struct Usage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct GenerationResult {
  std::string text;
  StopReason stop;
  Usage usage;
};

class RateLimitedError : public Error {
 public:
  RateLimitedError(const std::string& message, double retry_after_s)
      : Error(ErrorKind::RateLimited, message), retry_after_s_(retry_after_s) {}
  double retry_after_s() const { return retry_after_s_; }

 private:
  double retry_after_s_;
};

/// Uniform text-generation interface. Implementations must accept concurrent
/// generate() calls from distinct trajectories.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual GenerationResult generate(const GenerationRequest& request) = 0;
  /// False while the model service cannot be reached.
  virtual bool healthy() { return true; }
  virtual std::string describe() const = 0;
};

// ---------------------------------------------------------------------------
// Scripted backend: a deterministic stand-in for a model.

struct ScriptEntry {
  std::string fingerprint;
  std::optional<std::int64_t> seed;  // matches only requests carrying this seed
  std::string response;
};

class ScriptedBackend : public Backend {
 public:
  /// Throws InvalidArgument on duplicate (fingerprint, seed) pairs.
  explicit ScriptedBackend(std::vector<ScriptEntry> entries, bool honor_stop_sequences = true);

  /// JSONL; each line is {"fingerprint"|"last_message"+"step", "seed"?, "response"}.
  static std::unique_ptr<ScriptedBackend> load_file(const std::filesystem::path& path,
                                                    bool honor_stop_sequences = true);

  /// Hash of the last message's content and the assistant-turn count.
  static std::string fingerprint(std::string_view last_message, std::size_t step);
  static std::string fingerprint_of(const GenerationRequest& request);

  GenerationResult generate(const GenerationRequest& request) override;
  std::string describe() const override { return "scripted"; }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::map<std::pair<std::string, std::optional<std::int64_t>>, std::string> table_;
  bool honor_stops_;
  std::atomic<std::size_t> calls_{0};
};

/// Truncates `text` before the earliest stop sequence. Returns the stop that
/// fired, if any.
std::optional<std::string> apply_stop_sequences(std::string& text, const std::vector<std::string>& stops);

// ---------------------------------------------------------------------------
// Chat-completions client.

struct HttpBackendConfig {
  std::string base_url;  // POSTs go to base_url + "/v1/chat/completions"
  std::string model;
  std::string api_key;   // bearer token; empty sends none
  int timeout_ms = 120000;
  std::size_t max_stop_sequences = 4;  // longer lists are dropped; the engine scans instead
  bool send_seed = true;
};

class HttpBackend : public Backend {
 public:
  /// Throws InvalidArgument if base_url is not an absolute http(s) URL.
  explicit HttpBackend(HttpBackendConfig config);

  GenerationResult generate(const GenerationRequest& request) override;
  bool healthy() override;
  std::string describe() const override { return "http:" + config_.base_url + " model=" + config_.model; }

  /// Request body for `request`, exposed for tests.
  std::string request_body(const GenerationRequest& request) const;
  /// Parses a chat-completions response body. Throws ProtocolError.
  static GenerationResult parse_response(const std::string& body);

 private:
  HttpBackendConfig config_;
  net::Url endpoint_;
};

// ---------------------------------------------------------------------------

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to sleep_for
};

/// Retries Timeout and RateLimited failures with exponential backoff (and at
/// least the server's retry-after). Other errors surface immediately.
GenerationResult with_retry(Backend& backend, const GenerationRequest& request, const RetryPolicy& policy);

class RetryingBackend : public Backend {
 public:
  RetryingBackend(std::shared_ptr<Backend> inner, RetryPolicy policy)
      : inner_(std::move(inner)), policy_(std::move(policy)) {}

  GenerationResult generate(const GenerationRequest& request) override {
    return with_retry(*inner_, request, policy_);
  }
  bool healthy() override { return inner_->healthy(); }
  std::string describe() const override { return inner_->describe(); }

 private:
  std::shared_ptr<Backend> inner_;
  RetryPolicy policy_;
};

}  // namespace orchestra
