#include "orchestra/backend.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "orchestra/text.hpp"

namespace orchestra {

using nlohmann::json;

namespace {

std::size_t approx_tokens(std::string_view s) { return text::word_spans(s).size(); }

}  // namespace

void GenerationRequest::validate() const {
  if (messages.empty()) throw Error(ErrorKind::InvalidArgument, "generation request has no messages");
  for (const auto& s : stop_sequences) {
    if (s.empty() || s.size() > 64) {
      throw Error(ErrorKind::InvalidArgument, "stop sequence must be 1..64 bytes: '" + s + "'");
    }
  }
  if (max_tokens <= 0) throw Error(ErrorKind::InvalidArgument, "max_tokens must be positive");
}

std::optional<std::string> apply_stop_sequences(std::string& text, const std::vector<std::string>& stops) {
  std::size_t best = std::string::npos;
  const std::string* hit = nullptr;
  for (const auto& s : stops) {
    const auto pos = text.find(s);
    if (pos < best) {
      best = pos;
      hit = &s;
    }
  }
  if (!hit) return std::nullopt;
  text.resize(best);
  return *hit;
}

// --- scripted ---------------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> entries, bool honor_stop_sequences)
    : honor_stops_(honor_stop_sequences) {
  for (auto& e : entries) {
    auto key = std::make_pair(e.fingerprint, e.seed);
    if (!table_.emplace(key, std::move(e.response)).second) {
      throw Error(ErrorKind::InvalidArgument, "duplicate script fingerprint " + key.first +
                                                  (key.second ? " for seed " + std::to_string(*key.second) : ""));
    }
  }
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::load_file(const std::filesystem::path& path,
                                                            bool honor_stop_sequences) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open script file " + path.string());
  std::vector<ScriptEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const json j = json::parse(line);
      ScriptEntry e;
      if (j.contains("fingerprint")) {
        e.fingerprint = j.at("fingerprint").get<std::string>();
      } else {
        e.fingerprint = fingerprint(j.at("last_message").get<std::string>(), j.at("step").get<std::size_t>());
      }
      if (j.contains("seed") && !j.at("seed").is_null()) e.seed = j.at("seed").get<std::int64_t>();
      e.response = j.at("response").get<std::string>();
      entries.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::SchemaViolation, where + ": " + e.what());
    }
  }
  return std::make_unique<ScriptedBackend>(std::move(entries), honor_stop_sequences);
}

std::string ScriptedBackend::fingerprint(std::string_view last_message, std::size_t step) {
  std::uint64_t h = text::fnv1a64(last_message);
  h = text::fnv1a64("\x1f" + std::to_string(step), h);
  return text::hex64(h);
}

std::string ScriptedBackend::fingerprint_of(const GenerationRequest& request) {
  std::size_t step = 0;
  std::string_view last;
  for (const auto& m : request.messages) {
    if (m.role == Role::Assistant) ++step;
    if (m.role != Role::System) last = m.content;
  }
  return fingerprint(last, step);
}

GenerationResult ScriptedBackend::generate(const GenerationRequest& request) {
  request.validate();
  ++calls_;
  const std::string fp = fingerprint_of(request);
  auto it = request.seed ? table_.find({fp, request.seed}) : table_.end();
  if (it == table_.end()) it = table_.find({fp, std::nullopt});
  if (it == table_.end()) {
    throw Error(ErrorKind::NoScriptMatch, "no scripted response for fingerprint " + fp +
                                              (request.seed ? " (seed " + std::to_string(*request.seed) + ")" : ""));
  }

  GenerationResult result;
  result.text = it->second;
  if (honor_stops_) {
    if (auto matched = apply_stop_sequences(result.text, request.stop_sequences)) {
      result.stop = {StopReason::Kind::StopSequence, *matched};
    }
  }
  for (const auto& m : request.messages) result.usage.prompt_tokens += approx_tokens(m.content);
  result.usage.completion_tokens = approx_tokens(result.text);
  return result;
}

// --- http -------------------------------------------------------------------

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  std::string base = config_.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  auto url = net::Url::parse(base + "/v1/chat/completions");
  if (!url) throw Error(ErrorKind::InvalidArgument, "backend base URL '" + config_.base_url + "' is not valid");
  endpoint_ = *url;
}

std::string HttpBackend::request_body(const GenerationRequest& request) const {
  json messages = json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  json body = {{"model", config_.model},
               {"messages", std::move(messages)},
               {"temperature", request.temperature},
               {"max_tokens", request.max_tokens}};
  if (!request.stop_sequences.empty() && request.stop_sequences.size() <= config_.max_stop_sequences) {
    body["stop"] = request.stop_sequences;
  }
  if (config_.send_seed && request.seed) body["seed"] = *request.seed;
  return body.dump();
}

GenerationResult HttpBackend::parse_response(const std::string& body) {
  try {
    const json j = json::parse(body);
    const json& choice = j.at("choices").at(0);
    GenerationResult r;
    const json& content = choice.at("message").at("content");
    r.text = content.is_null() ? std::string{} : content.get<std::string>();
    const std::string finish = choice.value("finish_reason", std::string("stop"));
    if (finish == "length") {
      r.stop.kind = StopReason::Kind::Length;
    } else if (finish == "stop" && choice.contains("stop_sequence") && choice["stop_sequence"].is_string()) {
      r.stop = {StopReason::Kind::StopSequence, choice["stop_sequence"].get<std::string>()};
    } else if (finish == "stop") {
      // The provider does not say whether a stop sequence fired; the engine
      // recognizes an open block and closes it itself.
      r.stop.kind = StopReason::Kind::StopSequence;
    }
    if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
      r.usage.prompt_tokens = u->value("prompt_tokens", 0u);
      r.usage.completion_tokens = u->value("completion_tokens", 0u);
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ProtocolError, std::string("malformed chat-completions response: ") + e.what());
  }
}

GenerationResult HttpBackend::generate(const GenerationRequest& request) {
  request.validate();
  std::map<std::string, std::string> headers;
  if (!config_.api_key.empty()) headers["Authorization"] = "Bearer " + config_.api_key;
  const auto res = net::post_json(endpoint_, request_body(request), headers, config_.timeout_ms);

  if (res.status == 429) {
    double retry_after = 1.0;
    if (auto it = res.headers.find("retry-after"); it != res.headers.end()) {
      try {
        retry_after = std::stod(it->second);
      } catch (const std::exception&) {
      }
    }
    throw RateLimitedError("rate limited by " + endpoint_.origin(), retry_after);
  }
  if (res.status == 408 || res.status == 504) {
    throw Error(ErrorKind::Timeout, "model service timed out (HTTP " + std::to_string(res.status) + ")");
  }
  if (res.status != 200) {
    throw Error(ErrorKind::ProtocolError,
                "model service returned HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 512));
  }
  return parse_response(res.body);
}

bool HttpBackend::healthy() {
  try {
    return net::reachable(endpoint_, std::min(config_.timeout_ms, 2000));
  } catch (const Error&) {
    return false;
  }
}

// --- retry ------------------------------------------------------------------

GenerationResult with_retry(Backend& backend, const GenerationRequest& request, const RetryPolicy& policy) {
  const int attempts = std::max(1, policy.max_attempts);
  double delay_ms = static_cast<double>(policy.base_delay.count());
  for (int attempt = 1;; ++attempt) {
    try {
      return backend.generate(request);
    } catch (const Error& e) {
      const bool retryable = e.kind() == ErrorKind::Timeout || e.kind() == ErrorKind::RateLimited;
      if (!retryable || attempt >= attempts) throw;
      double wait = delay_ms;
      if (const auto* rl = dynamic_cast<const RateLimitedError*>(&e)) wait = std::max(wait, rl->retry_after_s() * 1000.0);
      const auto d = std::chrono::milliseconds(static_cast<long long>(std::llround(wait)));
      if (policy.sleep) {
        policy.sleep(d);
      } else {
        std::this_thread::sleep_for(d);
      }
      delay_ms *= policy.multiplier;
    }
  }
}

}  // namespace orchestra
