#include "orchestra/agents/websearch.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <future>
#include <set>
#include <unordered_map>

#include "orchestra/error.hpp"
#include "orchestra/net.hpp"
#include "orchestra/text.hpp"

namespace orchestra::websearch {

using nlohmann::json;

nlohmann::json to_json(const WebHit& hit) {
  json j = {{"title", hit.title}, {"url", hit.url}, {"date", hit.date}, {"snippet", hit.snippet}};
  j["extracted_context"] = hit.extracted_context ? json(*hit.extracted_context) : json(nullptr);
  return j;
}

namespace {

std::string url_encode(std::string_view s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

WebHit hit_from_json(const json& j) {
  WebHit h;
  h.title = j.value("title", "");
  h.url = j.at("url").get<std::string>();
  h.date = j.value("date", "");
  h.snippet = j.value("snippet", "");
  return h;
}

std::vector<WebHit> hits_from_json(const json& arr) {
  std::vector<WebHit> out;
  for (const auto& h : arr) out.push_back(hit_from_json(h));
  return out;
}

}  // namespace

Fixture Fixture::parse(const json& document) {
  try {
    Fixture f;
    if (auto it = document.find("queries"); it != document.end()) {
      for (const auto& [q, hits] : it->items()) f.queries[q] = hits_from_json(hits);
    }
    if (auto it = document.find("default"); it != document.end()) f.fallback = hits_from_json(*it);
    if (auto it = document.find("pages"); it != document.end()) {
      for (const auto& [url, page] : it->items()) {
        f.pages[url] = page.is_null() ? std::nullopt : std::optional<std::string>(page.get<std::string>());
      }
    }
    f.unavailable = document.value("unavailable", false);
    return f;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaViolation, std::string("bad web fixture: ") + e.what());
  }
}

Fixture Fixture::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open web fixture " + path.string());
  try {
    return parse(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::SchemaViolation, path.string() + ": " + e.what());
  }
}

std::vector<WebHit> FixtureProvider::search(std::string_view query, std::size_t k) {
  if (fixture_->unavailable) throw Error(ErrorKind::ProviderUnavailable, "fixture provider marked unavailable");
  const auto key = std::string(text::trim(query));
  auto it = fixture_->queries.find(key);
  std::vector<WebHit> hits = it != fixture_->queries.end() ? it->second : fixture_->fallback;
  if (hits.size() > k) hits.resize(k);
  return hits;
}

std::string FixtureFetcher::fetch(const std::string& url, int timeout_ms) {
  auto it = fixture_->pages.find(url);
  if (it == fixture_->pages.end()) throw Error(ErrorKind::Unreachable, "no fixture page for " + url);
  if (!it->second) {
    throw Error(ErrorKind::FetchTimeout, "fixture page " + url + " timed out after " + std::to_string(timeout_ms) + " ms");
  }
  return *it->second;
}

std::vector<WebHit> BingProvider::search(std::string_view query, std::size_t k) {
  auto url = net::Url::parse(endpoint_ + "?q=" + url_encode(query) +
                             "&count=" + std::to_string(k));
  if (!url) throw Error(ErrorKind::InvalidArgument, "bad search endpoint " + endpoint_);
  net::Response res;
  try {
    res = net::get(*url, {{"Ocp-Apim-Subscription-Key", api_key_}}, timeout_ms_);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::NetworkForbidden) throw;
    throw Error(ErrorKind::ProviderUnavailable, std::string("search provider: ") + e.what());
  }
  if (res.status != 200) {
    throw Error(ErrorKind::ProviderUnavailable, "search provider returned HTTP " + std::to_string(res.status));
  }
  try {
    const json j = json::parse(res.body);
    std::vector<WebHit> hits;
    if (auto wp = j.find("webPages"); wp != j.end()) {
      for (const auto& v : wp->at("value")) {
        WebHit h;
        h.title = v.value("name", "");
        h.url = v.value("url", "");
        h.snippet = v.value("snippet", "");
        const std::string crawled = v.value("dateLastCrawled", "");
        h.date = crawled.substr(0, std::min<std::size_t>(10, crawled.size()));
        hits.push_back(std::move(h));
        if (hits.size() == k) break;
      }
    }
    return hits;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ProviderUnavailable, std::string("malformed search response: ") + e.what());
  }
}

std::string html_to_text(std::string_view html) {
  std::string out;
  out.reserve(html.size());
  std::size_t i = 0;
  auto skip_block = [&](std::string_view close) {
    auto end = text::to_lower(html.substr(i)).find(close);
    i = end == std::string::npos ? html.size() : i + end + close.size();
  };
  while (i < html.size()) {
    if (html[i] == '<') {
      if (text::starts_with_icase(html.substr(i), "<script")) {
        skip_block("</script>");
      } else if (text::starts_with_icase(html.substr(i), "<style")) {
        skip_block("</style>");
      } else {
        const auto end = html.find('>', i);
        i = end == std::string_view::npos ? html.size() : end + 1;
      }
      out += ' ';
    } else if (html[i] == '&') {
      static constexpr std::pair<std::string_view, char> kEntities[] = {
          {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&#39;", '\''}, {"&nbsp;", ' '}};
      bool decoded = false;
      for (const auto& [name, ch] : kEntities) {
        if (html.substr(i, name.size()) == name) {
          out += ch;
          i += name.size();
          decoded = true;
          break;
        }
      }
      if (!decoded) out += html[i++];
    } else {
      out += html[i++];
    }
  }
  return out;
}

std::string HttpFetcher::fetch(const std::string& url, int timeout_ms) {
  auto u = net::Url::parse(url);
  if (!u) throw Error(ErrorKind::InvalidArgument, "bad page URL " + url);
  net::Response res;
  try {
    res = net::get(*u, {}, timeout_ms);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Timeout) throw Error(ErrorKind::FetchTimeout, e.what());
    throw;
  }
  if (res.status != 200) throw Error(ErrorKind::Unreachable, url + " returned HTTP " + std::to_string(res.status));
  return html_to_text(res.body);
}

std::string best_window(std::string_view page, std::string_view snippet, std::size_t window_tokens,
                        std::size_t max_bytes) {
  const auto spans = text::word_spans(page);
  const auto snippet_tokens = text::word_tokens(snippet);
  const std::set<std::string> wanted(snippet_tokens.begin(), snippet_tokens.end());
  if (spans.empty() || wanted.empty() || window_tokens == 0) return {};

  std::vector<std::string> tokens;
  tokens.reserve(spans.size());
  for (const auto& s : spans) tokens.push_back(text::to_lower(page.substr(s.begin, s.end - s.begin)));

  const std::size_t w = std::min(window_tokens, tokens.size());
  std::unordered_map<std::string, std::size_t> in_window;
  std::size_t distinct = 0;
  auto add = [&](const std::string& t) {
    if (wanted.count(t) && in_window[t]++ == 0) ++distinct;
  };
  auto remove = [&](const std::string& t) {
    if (wanted.count(t) && --in_window[t] == 0) --distinct;
  };
  for (std::size_t i = 0; i < w; ++i) add(tokens[i]);
  std::size_t best = distinct, best_start = 0;
  for (std::size_t start = 1; start + w <= tokens.size(); ++start) {
    remove(tokens[start - 1]);
    add(tokens[start + w - 1]);
    if (distinct > best) {
      best = distinct;
      best_start = start;
    }
  }
  if (best == 0) return {};

  // Matched span inside the winning window.
  std::size_t lo = best_start + w, hi = best_start;
  for (std::size_t i = best_start; i < best_start + w; ++i) {
    if (wanted.count(tokens[i])) {
      lo = std::min(lo, i);
      hi = i;
    }
  }
  // Grow around the matched span's centre, one token per side, within the
  // window and the byte cap.
  std::size_t first = lo, last = hi;
  auto bytes = [&](std::size_t a, std::size_t b) { return spans[b].end - spans[a].begin; };
  while (bytes(first, last) > max_bytes && last > first) {
    // The match alone is too long: trim the side farther from the centre.
    if ((last - lo) >= (hi - first)) {
      --last;
    } else {
      ++first;
    }
  }
  if (bytes(first, last) > max_bytes) return {};
  bool grew = true;
  while (grew) {
    grew = false;
    if (first > best_start && bytes(first - 1, last) <= max_bytes) {
      --first;
      grew = true;
    }
    if (last + 1 < best_start + w && bytes(first, last + 1) <= max_bytes) {
      ++last;
      grew = true;
    }
  }
  return std::string(page.substr(spans[first].begin, bytes(first, last)));
}

std::vector<WebHit> search(SearchProvider& provider, PageFetcher& fetcher, std::string_view query,
                           const SearchParams& params) {
  auto hits = provider.search(query, params.k);
  std::vector<std::future<std::optional<std::string>>> pages;
  pages.reserve(hits.size());
  for (const auto& h : hits) {
    pages.push_back(std::async(std::launch::async, [&fetcher, url = h.url, t = params.fetch_timeout_ms]()
                                                       -> std::optional<std::string> {
      try {
        return fetcher.fetch(url, t);
      } catch (const std::exception&) {
        return std::nullopt;
      }
    }));
  }
  for (std::size_t i = 0; i < hits.size(); ++i) {
    if (auto page = pages[i].get()) {
      hits[i].extracted_context = best_window(*page, hits[i].snippet, params.window_tokens, params.max_context_bytes);
    }
  }
  return hits;
}

std::string WebSearchAgent::invoke(std::string_view payload, const InvocationContext&) {
  json out = json::array();
  for (const auto& h : search(*provider_, *fetcher_, payload, params_)) out.push_back(to_json(h));
  return out.dump(2);
}

}  // namespace orchestra::websearch
