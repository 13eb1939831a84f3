#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// Small text helpers shared by the parser, retrieval, and evaluation code.
namespace orchestra::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Lowercased ASCII alphanumeric runs. Everything else separates tokens.
std::vector<std::string> word_tokens(std::string_view s);

/// Same split as word_tokens, but returns byte spans into `s`.
struct Span {
  std::size_t begin;
  std::size_t end;
};
std::vector<Span> word_spans(std::string_view s);

/// 64-bit FNV-1a. Stable across platforms; used for fingerprints and context
/// hashes that are persisted in traces and script files.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

bool starts_with_icase(std::string_view s, std::string_view prefix);

std::int64_t now_utc_ms();

}  // namespace orchestra::text
