#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

// Tool-call token grammar. A model asks for a tool by emitting
//
//   <|begin_{tool}_query|> payload <|end_{tool}_query|>
//
// and the engine answers with a <|begin_{tool}_result|> ... block. The final
// conclusion is wrapped in <|begin_answer|> ... <|end_answer|>. These byte
// sequences are a wire contract with prompt templates and script files.
namespace orchestra::markers {

inline constexpr std::string_view kAnswerBegin = "<|begin_answer|>";
inline constexpr std::string_view kAnswerEnd = "<|end_answer|>";
inline constexpr std::size_t kMaxToolNameLength = 64;
inline constexpr std::size_t kDefaultMaxPayload = 64 * 1024;

/// Tool names are non-empty runs of [A-Za-z0-9_], at most 64 bytes.
bool valid_tool_name(std::string_view tool);

std::string begin_query(std::string_view tool);
std::string end_query(std::string_view tool);
std::string begin_result(std::string_view tool);
std::string end_result(std::string_view tool);

/// begin_query + "\n" + payload + "\n" + end_query. Throws BadToolName.
std::string render_query(std::string_view tool, std::string_view payload);
/// begin_result + "\n" + payload + "\n" + end_result. Throws BadToolName.
std::string render_result(std::string_view tool, std::string_view payload);
/// begin_answer + "\n" + text + "\n" + end_answer.
std::string render_answer(std::string_view text);

/// Legacy bracket tokens such as "[SQL_QUERY]" keyed to canonical tool names.
using AliasTable = std::map<std::string, std::string, std::less<>>;

std::optional<std::string> alias_map(std::string_view legacy_token, const AliasTable& table);

/// The three bracket tokens named for the reasoning model's prompt.
AliasTable default_legacy_aliases();

struct Prose {
  std::string text;
};

struct ToolQuery {
  std::string tool;
  std::string payload;     // trimmed
  std::size_t begin = 0;   // offset of the begin marker
  std::size_t consumed = 0;  // bytes up to and including the end marker
};

struct AnswerBlock {
  std::string text;  // trimmed
  std::size_t begin = 0;
  std::size_t consumed = 0;
};

/// A begin marker with no matching end yet.
struct Incomplete {
  std::string tool;  // empty for an open answer block
  std::size_t begin = 0;
};

enum class ScanErrorKind { NestedMarker, MismatchedEnd, OversizePayload };

struct ScanError {
  ScanErrorKind kind;
  std::size_t offset = 0;
  std::string detail;
};

using ParseEvent = std::variant<Prose, ToolQuery, AnswerBlock, Incomplete, ScanError>;

std::string_view to_string(ScanErrorKind kind);

struct ScanOptions {
  std::size_t max_payload = kDefaultMaxPayload;
};

/// Returns the earliest complete tool query or answer block in `buffer`.
/// Text after that block is ignored, so growing the buffer never changes an
/// already-complete result.
ParseEvent scan(std::string_view buffer, const ScanOptions& options = {});

}  // namespace orchestra::markers
