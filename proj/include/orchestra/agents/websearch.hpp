#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "orchestra/agents/agent.hpp"

namespace orchestra::websearch {

struct WebHit {
  std::string title;
  std::string url;
  std::string date;
  std::string snippet;
  std::optional<std::string> extracted_context;

  bool operator==(const WebHit&) const = default;
};

nlohmann::json to_json(const WebHit& hit);

class SearchProvider {
 public:
  virtual ~SearchProvider() = default;
  /// Throws ProviderUnavailable when the provider cannot answer.
  virtual std::vector<WebHit> search(std::string_view query, std::size_t k) = 0;
};

class PageFetcher {
 public:
  virtual ~PageFetcher() = default;
  /// Page text. Throws FetchTimeout or any other orchestra::Error on failure.
  virtual std::string fetch(const std::string& url, int timeout_ms) = 0;
};

/// Canned hits and pages from a JSON document:
///   {"queries": {"<query>": [hit, ...]}, "default": [hit, ...],
///    "pages": {"<url>": "<text>" | null}}
/// A null page times out; a missing page is unreachable.
struct Fixture {
  std::map<std::string, std::vector<WebHit>> queries;
  std::vector<WebHit> fallback;
  std::map<std::string, std::optional<std::string>> pages;
  bool unavailable = false;

  static Fixture parse(const nlohmann::json& document);
  static Fixture load_file(const std::filesystem::path& path);
};

class FixtureProvider : public SearchProvider {
 public:
  explicit FixtureProvider(std::shared_ptr<const Fixture> fixture) : fixture_(std::move(fixture)) {}
  std::vector<WebHit> search(std::string_view query, std::size_t k) override;

 private:
  std::shared_ptr<const Fixture> fixture_;
};

class FixtureFetcher : public PageFetcher {
 public:
  explicit FixtureFetcher(std::shared_ptr<const Fixture> fixture) : fixture_(std::move(fixture)) {}
  std::string fetch(const std::string& url, int timeout_ms) override;

 private:
  std::shared_ptr<const Fixture> fixture_;
};

/// Bing Web Search v7.
class BingProvider : public SearchProvider {
 public:
  BingProvider(std::string endpoint, std::string api_key, int timeout_ms)
      : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)), timeout_ms_(timeout_ms) {}
  std::vector<WebHit> search(std::string_view query, std::size_t k) override;

 private:
  std::string endpoint_;
  std::string api_key_;
  int timeout_ms_;
};

/// GETs the page and reduces HTML to its visible text.
class HttpFetcher : public PageFetcher {
 public:
  std::string fetch(const std::string& url, int timeout_ms) override;
};

std::string html_to_text(std::string_view html);

/// The `window_tokens`-token window of `page` sharing the most distinct
/// tokens with `snippet` (earliest on ties), recentred on the matching tokens
/// and cut at token boundaries to at most `max_bytes`. Empty when nothing
/// overlaps.
std::string best_window(std::string_view page, std::string_view snippet, std::size_t window_tokens,
                        std::size_t max_bytes);

struct SearchParams {
  std::size_t k = 5;
  std::size_t window_tokens = 256;
  std::size_t max_context_bytes = 2048;
  int fetch_timeout_ms = 10000;
};

/// Searches, fetches every hit's page in parallel and attaches its best
/// window. Hits whose page fails keep only their snippet.
std::vector<WebHit> search(SearchProvider& provider, PageFetcher& fetcher, std::string_view query,
                           const SearchParams& params);

/// Settings: fixture (path) or provider "bing" with api_key_env and endpoint;
/// k, window_tokens, max_context_bytes, fetch_timeout_ms.
class WebSearchAgent : public Agent {
 public:
  WebSearchAgent(std::shared_ptr<SearchProvider> provider, std::shared_ptr<PageFetcher> fetcher, SearchParams params)
      : provider_(std::move(provider)), fetcher_(std::move(fetcher)), params_(params) {}

  std::string invoke(std::string_view payload, const InvocationContext& context) override;

 private:
  std::shared_ptr<SearchProvider> provider_;
  std::shared_ptr<PageFetcher> fetcher_;
  SearchParams params_;
};

}  // namespace orchestra::websearch
