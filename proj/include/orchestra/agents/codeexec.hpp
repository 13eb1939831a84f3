#pragma once

#include <chrono>
#include <string>
#include <string_view>
#include <vector>

#include "orchestra/agents/agent.hpp"
#include "orchestra/error.hpp"

// Sandboxed snippet execution.
//
// The snippet runs in a fresh process tree: new network and PID namespaces,
// CPU-time and address-space rlimits, and a Landlock ruleset that allows
// writes only inside a private working directory. The whole process group is
// killed and the directory removed before run() returns.
namespace orchestra::codeexec {

struct Limits {
  int cpu_seconds = 10;
  std::size_t memory_bytes = std::size_t{512} << 20;
  std::chrono::milliseconds wall{10000};
  std::size_t stream_cap_bytes = 8192;
  std::size_t file_size_bytes = std::size_t{64} << 20;
};

struct ExecResult {
  std::string stdout_text;
  std::string stderr_text;
  int exit_code = 0;    // -signal when killed by a signal
  bool stdout_truncated = false;
  bool stderr_truncated = false;
  double wall_ms = 0.0;
};

/// Carries the streams of a failed run. kind() is TimeLimit, MemoryLimit or
/// NonZeroExit.
class ExecError : public Error {
 public:
  ExecError(ErrorKind kind, const std::string& message, ExecResult result)
      : Error(kind, message), result_(std::move(result)) {}
  const ExecResult& result() const { return result_; }

 private:
  ExecResult result_;
};

/// Removes a surrounding Markdown code fence (with or without a language tag).
std::string strip_fences(std::string_view code);

struct SandboxReport {
  bool namespaces = false;
  int landlock_abi = 0;  // 0 = unavailable
};

/// What isolation the host offers. Probed once per process.
SandboxReport probe_sandbox();

/// Writes `code` to temp.py in a fresh working directory and runs
/// `interpreter temp.py` there. Throws ExecError. At most
/// `max_concurrent_runs()` sandboxes are alive at once.
ExecResult run(std::string_view code, const Limits& limits = {}, const std::string& interpreter = "python3");

std::size_t max_concurrent_runs();

std::string render(const ExecResult& result);

/// Settings: interpreter, cpu_seconds, memory_mb, wall_ms.
class CodeExecAgent : public Agent {
 public:
  CodeExecAgent(std::string interpreter, Limits limits)
      : interpreter_(std::move(interpreter)), limits_(limits) {}

  std::string invoke(std::string_view payload, const InvocationContext& context) override;

 private:
  std::string interpreter_;
  Limits limits_;
};

}  // namespace orchestra::codeexec
