#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Trajectory data model and its append-only JSONL persistence.
//
// A trajectory bundles the question (q), the rendered knowledge context (k),
// the ordered reasoning steps (r), the tool evidence attached to those steps
// (e) and the final answer (a).
namespace orchestra {

struct Attachment {
  std::string kind;
  std::string id;

  bool operator==(const Attachment&) const = default;
};

struct Question {
  std::string id;
  std::string text;
  std::vector<std::string> label_set;
  std::optional<std::string> gold;
  std::vector<Attachment> attachments;
  std::map<std::string, std::string> aliases;  // alias -> canonical label

  bool operator==(const Question&) const = default;
};

/// The user message submitted for a question: its text plus attachment refs.
std::string question_message(const Question& question);

enum class CallStatus { Pending, Ok, Error };

struct ToolCallRecord {
  std::string tool;
  std::string query;
  std::optional<std::string> result;  // verbatim tool output, never truncated
  CallStatus status = CallStatus::Pending;
  std::string error;                  // set when status == Error
  double latency_ms = 0.0;
  // Bytes of `result` that were shown to the model; nullopt means all of it.
  std::optional<std::size_t> context_bytes;

  bool operator==(const ToolCallRecord&) const = default;
};

struct ReasoningStep {
  std::size_t index = 0;
  std::string prose;
  std::optional<ToolCallRecord> tool_call;

  bool operator==(const ReasoningStep&) const = default;
};

struct StrategyDescriptor {
  std::string name = "default";
  std::string preamble;
  double temperature = 0.0;
  std::vector<std::string> tool_priority_hint;

  bool operator==(const StrategyDescriptor&) const = default;
};

struct TrajectoryRecord {
  std::string question_id;
  std::string question;           // exact user message
  std::string knowledge_context;  // exact system message
  std::vector<ReasoningStep> steps;
  std::optional<std::string> answer;
  StrategyDescriptor strategy;
  std::int64_t seed = 0;
  std::size_t budget_used = 0;  // generation calls made
  double wall_time_s = 0.0;
  std::int64_t started_ms = 0;  // UTC milliseconds since epoch
  std::vector<std::string> context_hashes;  // one per generation call
  std::optional<std::string> error;         // why an unfinalized run stopped

  bool finalized() const { return answer.has_value(); }
  bool operator==(const TrajectoryRecord&) const = default;
};

/// Throws AlreadyFinalized or IndexGap.
void append_step(TrajectoryRecord& trajectory, ReasoningStep step);
/// Throws PendingToolCall if the last step's tool call has no status yet.
void finalize(TrajectoryRecord& trajectory, std::string answer);

/// One JSON object, no trailing newline.
std::string write_trace(const TrajectoryRecord& trajectory);
/// Throws MalformedRecord.
TrajectoryRecord read_trace(std::string_view record);

/// Reads a JSONL trace file; errors name the 1-based line.
std::vector<TrajectoryRecord> read_trace_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Conversation replay

enum class Role { System, User, Assistant };
std::string_view to_string(Role role);

struct Message {
  Role role;
  std::string content;

  bool operator==(const Message&) const = default;
};

/// Text the model saw for a tool result: the (possibly truncated) output for
/// a successful call, or an error line.
std::string evidence_view(const ToolCallRecord& call);
/// Assistant turn text for a tool step: prose followed by the canonical query block.
std::string assistant_turn(const ReasoningStep& step);
/// User turn text carrying a tool result block.
std::string result_turn(const ToolCallRecord& call);

/// Messages submitted at generation `generation`, rebuilt from the record:
/// system context, question, then one assistant/user pair per earlier step.
std::vector<Message> replay_conversation(const TrajectoryRecord& trajectory, std::size_t generation);

/// Stable hash of a message list (hex FNV-1a).
std::string context_hash(const std::vector<Message>& messages);

/// True when every recorded context hash matches its replayed conversation.
bool replay_matches(const TrajectoryRecord& trajectory);

// ---------------------------------------------------------------------------

/// Appends one record per line. Safe for concurrent appends from several
/// trajectories; records never interleave below line granularity.
class TraceStore {
 public:
  explicit TraceStore(std::filesystem::path path);

  void append(const TrajectoryRecord& trajectory);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
  std::ofstream out_;
};

}  // namespace orchestra
