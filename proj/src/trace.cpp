#include "orchestra/trace.hpp"

#include <json.hpp>

#include "orchestra/error.hpp"
#include "orchestra/markers.hpp"
#include "orchestra/text.hpp"

namespace orchestra {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& what) {
  throw Error(ErrorKind::MalformedRecord, "malformed trace record: " + what);
}

const json& field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end()) malformed(std::string("missing field '") + name + "'");
  return *it;
}

std::string get_string(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_string()) malformed(std::string("field '") + name + "' is not a string");
  return v.get<std::string>();
}

std::optional<std::string> get_opt_string(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (v.is_null()) return std::nullopt;
  if (!v.is_string()) malformed(std::string("field '") + name + "' is not a string or null");
  return v.get<std::string>();
}

double get_number(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_number()) malformed(std::string("field '") + name + "' is not a number");
  return v.get<double>();
}

std::int64_t get_int(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_number_integer()) malformed(std::string("field '") + name + "' is not an integer");
  return v.get<std::int64_t>();
}

std::size_t get_count(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    malformed(std::string("field '") + name + "' is not a nonnegative integer");
  }
  return v.get<std::size_t>();
}

json strategy_to_json(const StrategyDescriptor& s) {
  return {{"name", s.name},
          {"preamble", s.preamble},
          {"temperature", s.temperature},
          {"tool_priority_hint", s.tool_priority_hint}};
}

StrategyDescriptor strategy_from_json(const json& j) {
  if (!j.is_object()) malformed("strategy is not an object");
  StrategyDescriptor s;
  s.name = get_string(j, "name");
  s.preamble = get_string(j, "preamble");
  s.temperature = get_number(j, "temperature");
  const json& hint = field(j, "tool_priority_hint");
  if (!hint.is_array()) malformed("tool_priority_hint is not an array");
  for (const auto& h : hint) {
    if (!h.is_string()) malformed("tool_priority_hint entry is not a string");
    s.tool_priority_hint.push_back(h.get<std::string>());
  }
  return s;
}

json step_to_json(const ReasoningStep& step) {
  json j = {{"t", step.index}, {"prose", step.prose}};
  if (!step.tool_call) {
    for (const char* k : {"tool", "query", "result", "status", "error", "latency_ms", "context_bytes"}) j[k] = nullptr;
    return j;
  }
  const auto& c = *step.tool_call;
  j["tool"] = c.tool;
  j["query"] = c.query;
  j["result"] = c.result ? json(*c.result) : json(nullptr);
  switch (c.status) {
    case CallStatus::Pending: j["status"] = nullptr; break;
    case CallStatus::Ok: j["status"] = "ok"; break;
    case CallStatus::Error: j["status"] = "error"; break;
  }
  j["error"] = c.status == CallStatus::Error ? json(c.error) : json(nullptr);
  j["latency_ms"] = c.latency_ms;
  j["context_bytes"] = c.context_bytes ? json(*c.context_bytes) : json(nullptr);
  return j;
}

ReasoningStep step_from_json(const json& j) {
  if (!j.is_object()) malformed("step is not an object");
  ReasoningStep step;
  step.index = get_count(j, "t");
  step.prose = get_string(j, "prose");
  const json& tool = field(j, "tool");
  if (tool.is_null()) return step;
  if (!tool.is_string()) malformed("step tool is not a string");

  ToolCallRecord c;
  c.tool = tool.get<std::string>();
  c.query = get_string(j, "query");
  c.result = get_opt_string(j, "result");
  const json& status = field(j, "status");
  if (status.is_null()) {
    c.status = CallStatus::Pending;
  } else if (status == "ok") {
    c.status = CallStatus::Ok;
    if (!c.result) malformed("ok tool call without a result");
  } else if (status == "error") {
    c.status = CallStatus::Error;
    c.error = get_string(j, "error");
  } else {
    malformed("unknown status " + status.dump());
  }
  c.latency_ms = get_number(j, "latency_ms");
  const json& cb = field(j, "context_bytes");
  if (!cb.is_null()) c.context_bytes = get_count(j, "context_bytes");
  step.tool_call = std::move(c);
  return step;
}

}  // namespace

std::string question_message(const Question& question) {
  std::string out = question.text;
  if (!question.attachments.empty()) {
    out += "\n\nAttachments:";
    for (const auto& a : question.attachments) out += "\n- " + a.kind + ": " + a.id;
  }
  return out;
}

void append_step(TrajectoryRecord& trajectory, ReasoningStep step) {
  if (trajectory.finalized()) {
    throw Error(ErrorKind::AlreadyFinalized, "trajectory for '" + trajectory.question_id + "' is finalized");
  }
  if (step.index != trajectory.steps.size()) {
    throw Error(ErrorKind::IndexGap, "step index " + std::to_string(step.index) + " but trajectory has " +
                                         std::to_string(trajectory.steps.size()) + " steps");
  }
  trajectory.steps.push_back(std::move(step));
}

void finalize(TrajectoryRecord& trajectory, std::string answer) {
  if (trajectory.finalized()) {
    throw Error(ErrorKind::AlreadyFinalized, "trajectory for '" + trajectory.question_id + "' is finalized");
  }
  if (!trajectory.steps.empty()) {
    const auto& last = trajectory.steps.back();
    if (last.tool_call && last.tool_call->status == CallStatus::Pending) {
      throw Error(ErrorKind::PendingToolCall, "last step has an unanswered call to '" + last.tool_call->tool + "'");
    }
  }
  trajectory.answer = std::move(answer);
}

std::string write_trace(const TrajectoryRecord& t) {
  json steps = json::array();
  for (const auto& s : t.steps) steps.push_back(step_to_json(s));
  json j = {
      {"question_id", t.question_id},
      {"question", t.question},
      {"strategy", strategy_to_json(t.strategy)},
      {"seed", t.seed},
      {"knowledge_context", t.knowledge_context},
      {"steps", std::move(steps)},
      {"answer", t.answer ? json(*t.answer) : json(nullptr)},
      {"wall_time_s", t.wall_time_s},
      {"budget_used", t.budget_used},
      {"started_ms", t.started_ms},
      {"context_hashes", t.context_hashes},
      {"error", t.error ? json(*t.error) : json(nullptr)},
  };
  return j.dump();
}

TrajectoryRecord read_trace(std::string_view record) {
  json j;
  try {
    j = json::parse(record);
  } catch (const json::parse_error& e) {
    malformed(e.what());
  }
  if (!j.is_object()) malformed("record is not a JSON object");

  TrajectoryRecord t;
  t.question_id = get_string(j, "question_id");
  t.question = get_string(j, "question");
  t.strategy = strategy_from_json(field(j, "strategy"));
  t.seed = get_int(j, "seed");
  t.knowledge_context = get_string(j, "knowledge_context");

  const json& steps = field(j, "steps");
  if (!steps.is_array()) malformed("steps is not an array");
  for (const auto& s : steps) {
    ReasoningStep step = step_from_json(s);
    if (step.index != t.steps.size()) {
      malformed("step index " + std::to_string(step.index) + " at position " + std::to_string(t.steps.size()));
    }
    t.steps.push_back(std::move(step));
  }

  t.answer = get_opt_string(j, "answer");
  t.wall_time_s = get_number(j, "wall_time_s");
  t.budget_used = get_count(j, "budget_used");
  t.started_ms = get_int(j, "started_ms");
  const json& hashes = field(j, "context_hashes");
  if (!hashes.is_array()) malformed("context_hashes is not an array");
  for (const auto& h : hashes) {
    if (!h.is_string()) malformed("context hash is not a string");
    t.context_hashes.push_back(h.get<std::string>());
  }
  t.error = get_opt_string(j, "error");

  return t;
}

std::vector<TrajectoryRecord> read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open trace file " + path.string());
  std::vector<TrajectoryRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(read_trace(line));
    } catch (const Error& e) {
      throw Error(ErrorKind::MalformedRecord, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

std::string evidence_view(const ToolCallRecord& call) {
  if (call.status == CallStatus::Error) return "ERROR: " + call.error;
  const std::string& full = call.result.value_or(std::string{});
  if (!call.context_bytes || *call.context_bytes >= full.size()) return full;
  return full.substr(0, *call.context_bytes) + "\n[truncated: showing " + std::to_string(*call.context_bytes) +
         " of " + std::to_string(full.size()) + " bytes]";
}

std::string assistant_turn(const ReasoningStep& step) {
  return step.prose + markers::render_query(step.tool_call->tool, step.tool_call->query);
}

std::string result_turn(const ToolCallRecord& call) {
  return markers::render_result(call.tool, evidence_view(call));
}

std::vector<Message> replay_conversation(const TrajectoryRecord& t, std::size_t generation) {
  std::vector<Message> msgs{{Role::System, t.knowledge_context}, {Role::User, t.question}};
  for (std::size_t i = 0; i < generation && i < t.steps.size(); ++i) {
    const auto& step = t.steps[i];
    if (!step.tool_call) break;
    msgs.push_back({Role::Assistant, assistant_turn(step)});
    msgs.push_back({Role::User, result_turn(*step.tool_call)});
  }
  return msgs;
}

std::string context_hash(const std::vector<Message>& messages) {
  std::uint64_t h = text::fnv1a64("");
  for (const auto& m : messages) {
    h = text::fnv1a64(to_string(m.role), h);
    h = text::fnv1a64("\x1e", h);
    h = text::fnv1a64(m.content, h);
    h = text::fnv1a64("\x1f", h);
  }
  return text::hex64(h);
}

bool replay_matches(const TrajectoryRecord& t) {
  for (std::size_t g = 0; g < t.context_hashes.size(); ++g) {
    if (context_hash(replay_conversation(t, g)) != t.context_hashes[g]) return false;
  }
  return true;
}

TraceStore::TraceStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  out_.open(path_, std::ios::app | std::ios::binary);
  if (!out_) throw Error(ErrorKind::Io, "cannot open trace file " + path_.string());
}

void TraceStore::append(const TrajectoryRecord& trajectory) {
  const std::string line = write_trace(trajectory) + "\n";
  std::lock_guard lock(mutex_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
}

}  // namespace orchestra
