#include "orchestra/markers.hpp"

#include "orchestra/error.hpp"
#include "orchestra/text.hpp"

namespace orchestra::markers {

namespace {

constexpr std::string_view kOpen = "<|";
constexpr std::string_view kClose = "|>";
constexpr std::size_t kMaxMarkerInner = kMaxToolNameLength + 16;

bool name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

void require_name(std::string_view tool) {
  if (!valid_tool_name(tool)) {
    throw Error(ErrorKind::BadToolName, "invalid tool name '" + std::string(tool) + "'");
  }
}

enum class MarkerType { QueryBegin, QueryEnd, AnswerBegin, AnswerEnd };

struct Marker {
  MarkerType type;
  std::string_view tool;
  std::size_t offset;
  std::size_t length;
};

std::optional<Marker> classify(std::string_view inner, std::size_t offset) {
  const std::size_t length = inner.size() + kOpen.size() + kClose.size();
  if (inner == "begin_answer") return Marker{MarkerType::AnswerBegin, {}, offset, length};
  if (inner == "end_answer") return Marker{MarkerType::AnswerEnd, {}, offset, length};

  constexpr std::string_view kQuery = "_query";
  if (!inner.ends_with(kQuery)) return std::nullopt;
  inner.remove_suffix(kQuery.size());

  MarkerType type;
  if (inner.starts_with("begin_")) {
    type = MarkerType::QueryBegin;
    inner.remove_prefix(6);
  } else if (inner.starts_with("end_")) {
    type = MarkerType::QueryEnd;
    inner.remove_prefix(4);
  } else {
    return std::nullopt;
  }
  if (!valid_tool_name(inner)) return std::nullopt;
  return Marker{type, inner, offset, length};
}

// Next marker at or after `from`, or nullopt.
std::optional<Marker> next_marker(std::string_view buf, std::size_t from) {
  std::size_t pos = buf.find(kOpen, from);
  while (pos != std::string_view::npos) {
    const std::size_t inner_begin = pos + kOpen.size();
    const std::size_t limit = std::min(buf.size(), inner_begin + kMaxMarkerInner + kClose.size());
    const std::size_t close = buf.substr(0, limit).find(kClose, inner_begin);
    if (close != std::string_view::npos) {
      if (auto m = classify(buf.substr(inner_begin, close - inner_begin), pos)) return m;
    }
    pos = buf.find(kOpen, pos + 1);
  }
  return std::nullopt;
}

std::string describe(const Marker& m, std::string_view buf) {
  return std::string(buf.substr(m.offset, m.length));
}

}  // namespace

bool valid_tool_name(std::string_view tool) {
  if (tool.empty() || tool.size() > kMaxToolNameLength) return false;
  for (char c : tool) {
    if (!name_char(c)) return false;
  }
  return true;
}

std::string begin_query(std::string_view tool) { return "<|begin_" + std::string(tool) + "_query|>"; }
std::string end_query(std::string_view tool) { return "<|end_" + std::string(tool) + "_query|>"; }
std::string begin_result(std::string_view tool) { return "<|begin_" + std::string(tool) + "_result|>"; }
std::string end_result(std::string_view tool) { return "<|end_" + std::string(tool) + "_result|>"; }

std::string render_query(std::string_view tool, std::string_view payload) {
  require_name(tool);
  std::string out = begin_query(tool);
  out += '\n';
  out += payload;
  out += '\n';
  out += end_query(tool);
  return out;
}

std::string render_result(std::string_view tool, std::string_view payload) {
  require_name(tool);
  std::string out = begin_result(tool);
  out += '\n';
  out += payload;
  out += '\n';
  out += end_result(tool);
  return out;
}

std::string render_answer(std::string_view text) {
  std::string out(kAnswerBegin);
  out += '\n';
  out += text;
  out += '\n';
  out += kAnswerEnd;
  return out;
}

std::optional<std::string> alias_map(std::string_view legacy_token, const AliasTable& table) {
  if (auto it = table.find(legacy_token); it != table.end()) return it->second;
  return std::nullopt;
}

AliasTable default_legacy_aliases() {
  return {{"[IMAGE_QUERY]", "image"}, {"[SQL_QUERY]", "sql"}, {"[WEB_QUERY]", "web"}};
}

std::string_view to_string(ScanErrorKind kind) {
  switch (kind) {
    case ScanErrorKind::NestedMarker: return "NestedMarker";
    case ScanErrorKind::MismatchedEnd: return "MismatchedEnd";
    case ScanErrorKind::OversizePayload: return "OversizePayload";
  }
  return "Unknown";
}

ParseEvent scan(std::string_view buffer, const ScanOptions& options) {
  std::optional<Marker> open;
  std::size_t pos = 0;

  auto oversize = [&](std::size_t payload_len) {
    return ScanError{ScanErrorKind::OversizePayload, open->offset,
                     "payload of " + std::to_string(payload_len) + " bytes exceeds limit of " +
                         std::to_string(options.max_payload)};
  };

  while (auto m = next_marker(buffer, pos)) {
    pos = m->offset + m->length;
    const bool is_begin = m->type == MarkerType::QueryBegin || m->type == MarkerType::AnswerBegin;

    if (is_begin) {
      if (open) {
        return ScanError{ScanErrorKind::NestedMarker, m->offset,
                         describe(*m, buffer) + " inside open " + describe(*open, buffer)};
      }
      open = m;
      continue;
    }

    const bool matches = open && ((m->type == MarkerType::AnswerEnd && open->type == MarkerType::AnswerBegin) ||
                                  (m->type == MarkerType::QueryEnd && open->type == MarkerType::QueryBegin &&
                                   m->tool == open->tool));
    if (!matches) {
      return ScanError{ScanErrorKind::MismatchedEnd, m->offset,
                       describe(*m, buffer) + (open ? " does not close " + describe(*open, buffer)
                                                    : std::string(" with no open block"))};
    }

    const std::size_t body_begin = open->offset + open->length;
    const std::string_view body = buffer.substr(body_begin, m->offset - body_begin);
    if (body.size() > options.max_payload) return oversize(body.size());

    const std::size_t consumed = m->offset + m->length;
    if (open->type == MarkerType::AnswerBegin) {
      return AnswerBlock{std::string(text::trim(body)), open->offset, consumed};
    }
    return ToolQuery{std::string(open->tool), std::string(text::trim(body)), open->offset, consumed};
  }

  if (open) {
    const std::size_t body_begin = open->offset + open->length;
    if (buffer.size() - body_begin > options.max_payload) return oversize(buffer.size() - body_begin);
    return Incomplete{std::string(open->tool), open->offset};
  }
  return Prose{std::string(buffer)};
}

}  // namespace orchestra::markers
