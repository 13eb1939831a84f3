#ifndef _GNU_SOURCE
#define _GNU_SOURCE
#endif

#include "orchestra/agents/codeexec.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/resource.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <semaphore>

#include "orchestra/text.hpp"

namespace orchestra::codeexec {

namespace {

// Landlock ABI, declared locally because the system headers predate the
// network rights.
constexpr std::uint64_t kFsWriteFile = 1ULL << 1;
constexpr std::uint64_t kFsRemoveDir = 1ULL << 4;
constexpr std::uint64_t kFsRemoveFile = 1ULL << 5;
constexpr std::uint64_t kFsMakeChar = 1ULL << 6;
constexpr std::uint64_t kFsMakeDir = 1ULL << 7;
constexpr std::uint64_t kFsMakeReg = 1ULL << 8;
constexpr std::uint64_t kFsMakeSock = 1ULL << 9;
constexpr std::uint64_t kFsMakeFifo = 1ULL << 10;
constexpr std::uint64_t kFsMakeBlock = 1ULL << 11;
constexpr std::uint64_t kFsMakeSym = 1ULL << 12;
constexpr std::uint64_t kFsRefer = 1ULL << 13;
constexpr std::uint64_t kFsTruncate = 1ULL << 14;
constexpr std::uint64_t kNetBindTcp = 1ULL << 0;
constexpr std::uint64_t kNetConnectTcp = 1ULL << 1;
constexpr int kRulePathBeneath = 1;
constexpr unsigned kCreateRulesetVersion = 1U << 0;

struct RulesetAttr {
  std::uint64_t handled_access_fs;
  std::uint64_t handled_access_net;
};

struct __attribute__((packed)) PathBeneathAttr {
  std::uint64_t allowed_access;
  std::int32_t parent_fd;
};

int landlock_abi() {
  const long abi = syscall(__NR_landlock_create_ruleset, nullptr, 0, kCreateRulesetVersion);
  return abi < 0 ? 0 : static_cast<int>(abi);
}

// Everything needed after fork, computed up front: the children may only make
// async-signal-safe calls.
struct ChildPlan {
  const char* interpreter;
  char* const* argv;
  char* const* envp;
  const char* workdir;
  int abi;
  bool try_namespaces;
  rlim_t cpu_seconds;
  rlim_t memory_bytes;
  rlim_t file_size_bytes;
};

// Returns false when the ruleset could not be applied.
bool apply_landlock(const ChildPlan& plan) {
  if (plan.abi < 1) return false;
  RulesetAttr attr{};
  attr.handled_access_fs = kFsWriteFile | kFsRemoveDir | kFsRemoveFile | kFsMakeChar | kFsMakeDir | kFsMakeReg |
                           kFsMakeSock | kFsMakeFifo | kFsMakeBlock | kFsMakeSym;
  if (plan.abi >= 2) attr.handled_access_fs |= kFsRefer;
  if (plan.abi >= 3) attr.handled_access_fs |= kFsTruncate;
  std::size_t attr_size = sizeof(std::uint64_t);
  if (plan.abi >= 4) {
    attr.handled_access_net = kNetBindTcp | kNetConnectTcp;
    attr_size = sizeof(RulesetAttr);
  }
  const int ruleset = static_cast<int>(syscall(__NR_landlock_create_ruleset, &attr, attr_size, 0U));
  if (ruleset < 0) return false;

  const int dir = open(plan.workdir, O_PATH | O_CLOEXEC);
  if (dir < 0) return false;
  PathBeneathAttr work{attr.handled_access_fs, dir};
  if (syscall(__NR_landlock_add_rule, ruleset, kRulePathBeneath, &work, 0U) != 0) return false;
  close(dir);

  const int null_fd = open("/dev/null", O_PATH | O_CLOEXEC);
  if (null_fd >= 0) {
    PathBeneathAttr dev_null{kFsWriteFile | (plan.abi >= 3 ? kFsTruncate : 0), null_fd};
    syscall(__NR_landlock_add_rule, ruleset, kRulePathBeneath, &dev_null, 0U);
    close(null_fd);
  }
  if (prctl(PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0) return false;
  const bool ok = syscall(__NR_landlock_restrict_self, ruleset, 0U) == 0;
  close(ruleset);
  return ok;
}

[[noreturn]] void exec_interpreter(const ChildPlan& plan) {
  struct rlimit cpu{plan.cpu_seconds, plan.cpu_seconds + 1};
  struct rlimit mem{plan.memory_bytes, plan.memory_bytes};
  struct rlimit fsize{plan.file_size_bytes, plan.file_size_bytes};
  struct rlimit core{0, 0};
  if (setrlimit(RLIMIT_CPU, &cpu) != 0 || setrlimit(RLIMIT_AS, &mem) != 0 || setrlimit(RLIMIT_FSIZE, &fsize) != 0) {
    _exit(125);
  }
  setrlimit(RLIMIT_CORE, &core);
  close(3);  // the status pipe belongs to the reaper
  if (chdir(plan.workdir) != 0) _exit(125);
  if (plan.abi >= 1 && !apply_landlock(plan)) _exit(125);
  execve(plan.interpreter, plan.argv, plan.envp);
  _exit(127);
}

// Process A: leader of a fresh process group. Enters new namespaces, then
// forks B (PID 1 inside them), which forks and reaps the interpreter C and
// reports C's wait status on fd 3.
[[noreturn]] void run_leader(const ChildPlan& plan) {
  prctl(PR_SET_PDEATHSIG, SIGKILL);
  if (plan.try_namespaces) {
    if (unshare(CLONE_NEWNET | CLONE_NEWPID) != 0) unshare(CLONE_NEWUSER | CLONE_NEWNET | CLONE_NEWPID);
  }
  const pid_t b = fork();
  if (b < 0) _exit(126);
  if (b == 0) {
    prctl(PR_SET_PDEATHSIG, SIGKILL);
    const pid_t c = fork();
    if (c < 0) _exit(126);
    if (c == 0) exec_interpreter(plan);
    close(1);
    close(2);
    int status = 0;
    while (waitpid(c, &status, 0) < 0 && errno == EINTR) {
    }
    [[maybe_unused]] auto n = write(3, &status, sizeof status);
    _exit(0);
  }
  close(1);
  close(2);
  close(3);
  int status = 0;
  while (waitpid(b, &status, 0) < 0 && errno == EINTR) {
  }
  _exit(0);
}

std::string resolve_interpreter(const std::string& name) {
  if (name.find('/') != std::string::npos) return name;
  const char* path = std::getenv("PATH");
  std::string dirs = path ? path : "/usr/local/bin:/usr/bin:/bin";
  std::size_t start = 0;
  while (start <= dirs.size()) {
    const auto end = dirs.find(':', start);
    const auto dir = dirs.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (!dir.empty()) {
      const auto candidate = std::filesystem::path(dir) / name;
      if (access(candidate.c_str(), X_OK) == 0) return candidate.string();
    }
    if (end == std::string::npos) break;
    start = end + 1;
  }
  throw Error(ErrorKind::InvalidArgument, "interpreter '" + name + "' not found on PATH");
}

struct Fd {
  int fd = -1;
  Fd() = default;
  explicit Fd(int f) : fd(f) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }
  void reset() {
    if (fd >= 0) close(fd);
    fd = -1;
  }
};

void make_pipe(Fd& r, Fd& w) {
  int p[2];
  if (pipe2(p, O_CLOEXEC) != 0) throw Error(ErrorKind::Io, std::string("pipe: ") + std::strerror(errno));
  r.fd = p[0];
  w.fd = p[1];
}

std::counting_semaphore<64>& run_slots() {
  static std::counting_semaphore<64> slots(static_cast<std::ptrdiff_t>(max_concurrent_runs()));
  return slots;
}

struct SlotGuard {
  SlotGuard() { run_slots().acquire(); }
  ~SlotGuard() { run_slots().release(); }
};

struct Capture {
  std::string data;
  bool truncated = false;
  bool open = true;
};

void drain(int fd, Capture& cap, std::size_t limit) {
  char buf[4096];
  for (;;) {
    const ssize_t n = read(fd, buf, sizeof buf);
    if (n > 0) {
      const std::size_t room = limit > cap.data.size() ? limit - cap.data.size() : 0;
      const std::size_t take = std::min(room, static_cast<std::size_t>(n));
      cap.data.append(buf, take);
      if (take < static_cast<std::size_t>(n)) cap.truncated = true;
      continue;
    }
    if (n == 0) cap.open = false;
    if (n < 0 && errno == EINTR) continue;
    return;  // EOF or EAGAIN
  }
}

bool mentions_memory_exhaustion(const std::string& err) {
  return err.find("MemoryError") != std::string::npos || err.find("std::bad_alloc") != std::string::npos ||
         err.find("Cannot allocate memory") != std::string::npos;
}

}  // namespace

std::size_t max_concurrent_runs() { return 4; }

std::string strip_fences(std::string_view code) {
  auto body = text::trim(code);
  if (body.substr(0, 3) != "```") return std::string(body);
  const auto first_nl = body.find('\n');
  if (first_nl == std::string_view::npos) return {};
  body.remove_prefix(first_nl + 1);
  const auto close = body.rfind("```");
  if (close != std::string_view::npos && text::trim(body.substr(close + 3)).empty()) body = body.substr(0, close);
  std::string out(body);
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r' || out.back() == ' ')) out.pop_back();
  return out + "\n";
}

SandboxReport probe_sandbox() {
  static const SandboxReport report = [] {
    SandboxReport r;
    r.landlock_abi = landlock_abi();
    const pid_t pid = fork();
    if (pid == 0) {
      if (unshare(CLONE_NEWNET | CLONE_NEWPID) == 0) _exit(0);
      _exit(unshare(CLONE_NEWUSER | CLONE_NEWNET | CLONE_NEWPID) == 0 ? 0 : 1);
    }
    int status = 0;
    if (pid > 0 && waitpid(pid, &status, 0) == pid) r.namespaces = WIFEXITED(status) && WEXITSTATUS(status) == 0;
    return r;
  }();
  return report;
}

ExecResult run(std::string_view code, const Limits& limits, const std::string& interpreter) {
  const auto report = probe_sandbox();
  const std::string interp = resolve_interpreter(interpreter);
  SlotGuard slot;

  std::string tmpl = (std::filesystem::temp_directory_path() / "orchestra-exec-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw Error(ErrorKind::Io, std::string("mkdtemp: ") + std::strerror(errno));
  const std::filesystem::path workdir(tmpl);
  struct Cleanup {
    std::filesystem::path dir;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove_all(dir, ec);
    }
  } cleanup{workdir};

  {
    std::ofstream out(workdir / "temp.py", std::ios::binary);
    const auto source = strip_fences(code);
    out.write(source.data(), static_cast<std::streamsize>(source.size()));
    if (!out) throw Error(ErrorKind::Io, "cannot write temp.py");
  }

  std::vector<std::string> args = {interp, "temp.py"};
  std::vector<std::string> env = {"PATH=/usr/local/bin:/usr/bin:/bin",
                                  "HOME=" + workdir.string(),
                                  "TMPDIR=" + workdir.string(),
                                  "PYTHONDONTWRITEBYTECODE=1",
                                  "PYTHONIOENCODING=utf-8",
                                  "LANG=C.UTF-8"};
  std::vector<char*> argv, envp;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  for (auto& e : env) envp.push_back(e.data());
  envp.push_back(nullptr);
  const std::string workdir_str = workdir.string();

  ChildPlan plan{interp.c_str(),
                 argv.data(),
                 envp.data(),
                 workdir_str.c_str(),
                 report.landlock_abi,
                 report.namespaces,
                 static_cast<rlim_t>(std::max(1, limits.cpu_seconds)),
                 static_cast<rlim_t>(limits.memory_bytes),
                 static_cast<rlim_t>(limits.file_size_bytes)};

  Fd out_r, out_w, err_r, err_w, st_r, st_w;
  make_pipe(out_r, out_w);
  make_pipe(err_r, err_w);
  make_pipe(st_r, st_w);
  Fd null_in(open("/dev/null", O_RDONLY | O_CLOEXEC));
  if (null_in.fd < 0) throw Error(ErrorKind::Io, "cannot open /dev/null");

  const auto started = std::chrono::steady_clock::now();
  const pid_t leader = fork();
  if (leader < 0) throw Error(ErrorKind::Io, std::string("fork: ") + std::strerror(errno));
  if (leader == 0) {
    setpgid(0, 0);
    const int in = fcntl(null_in.fd, F_DUPFD, 100);
    const int o = fcntl(out_w.fd, F_DUPFD, 100);
    const int e = fcntl(err_w.fd, F_DUPFD, 100);
    const int s = fcntl(st_w.fd, F_DUPFD, 100);
    if (in < 0 || o < 0 || e < 0 || s < 0) _exit(126);
    if (dup2(in, 0) < 0 || dup2(o, 1) < 0 || dup2(e, 2) < 0 || dup2(s, 3) < 0) _exit(126);
    close_range(4, ~0U, 0);
    run_leader(plan);
  }
  setpgid(leader, leader);
  out_w.reset();
  err_w.reset();
  st_w.reset();
  fcntl(out_r.fd, F_SETFL, O_NONBLOCK);
  fcntl(err_r.fd, F_SETFL, O_NONBLOCK);

  Capture out, err;
  bool timed_out = false;
  const auto deadline = started + limits.wall;
  auto kill_deadline = std::chrono::steady_clock::time_point::max();
  while (out.open || err.open) {
    const auto now = std::chrono::steady_clock::now();
    if (!timed_out && now >= deadline) {
      timed_out = true;
      kill(-leader, SIGKILL);
      kill_deadline = now + std::chrono::seconds(2);
    }
    if (timed_out && now >= kill_deadline) break;
    const auto until = timed_out ? kill_deadline : deadline;
    const int wait_ms =
        static_cast<int>(std::max<long long>(1, std::chrono::duration_cast<std::chrono::milliseconds>(until - now).count()));
    pollfd fds[2] = {{out.open ? out_r.fd : -1, POLLIN, 0}, {err.open ? err_r.fd : -1, POLLIN, 0}};
    const int rc = poll(fds, 2, wait_ms);
    if (rc < 0 && errno != EINTR) break;
    if (rc > 0) {
      if (fds[0].revents) drain(out_r.fd, out, limits.stream_cap_bytes);
      if (fds[1].revents) drain(err_r.fd, err, limits.stream_cap_bytes);
    }
  }

  // The streams close when the interpreter exits, slightly before the
  // reaper reports its status. Wait for that report before killing the tree.
  if (!timed_out) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    pollfd st{st_r.fd, POLLIN, 0};
    while (poll(&st, 1, static_cast<int>(std::max<long long>(1, left.count()))) < 0 && errno == EINTR) {
    }
  }
  kill(-leader, SIGKILL);
  int leader_status = 0;
  while (waitpid(leader, &leader_status, 0) < 0 && errno == EINTR) {
  }

  int status = 0;
  bool have_status = false;
  {
    fcntl(st_r.fd, F_SETFL, O_NONBLOCK);
    const ssize_t n = read(st_r.fd, &status, sizeof status);
    have_status = n == static_cast<ssize_t>(sizeof status);
  }

  ExecResult result;
  result.stdout_text = std::move(out.data);
  result.stderr_text = std::move(err.data);
  result.stdout_truncated = out.truncated;
  result.stderr_truncated = err.truncated;
  result.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

  if (timed_out || !have_status) {
    result.exit_code = -SIGKILL;
    throw ExecError(ErrorKind::TimeLimit, "execution exceeded the wall-clock limit", std::move(result));
  }
  if (WIFSIGNALED(status)) {
    const int sig = WTERMSIG(status);
    result.exit_code = -sig;
    if (sig == SIGXCPU || sig == SIGKILL) {
      throw ExecError(ErrorKind::TimeLimit, "execution exceeded the CPU-time limit", std::move(result));
    }
    if (mentions_memory_exhaustion(result.stderr_text)) {
      throw ExecError(ErrorKind::MemoryLimit, "execution exceeded the memory limit", std::move(result));
    }
    throw ExecError(ErrorKind::NonZeroExit, "process killed by signal " + std::to_string(sig), std::move(result));
  }
  result.exit_code = WEXITSTATUS(status);
  if (result.exit_code == 125) throw Error(ErrorKind::Io, "sandbox setup failed");
  if (result.exit_code != 0) {
    if (mentions_memory_exhaustion(result.stderr_text)) {
      throw ExecError(ErrorKind::MemoryLimit, "execution exceeded the memory limit", std::move(result));
    }
    throw ExecError(ErrorKind::NonZeroExit, "process exited with status " + std::to_string(result.exit_code),
                    std::move(result));
  }
  return result;
}

std::string render(const ExecResult& result) {
  std::string out = "exit status: " + std::to_string(result.exit_code) + "\nstdout:\n" + result.stdout_text;
  if (result.stdout_truncated) out += "\n[stdout truncated]";
  if (!result.stderr_text.empty() || result.stderr_truncated) {
    out += "\nstderr:\n" + result.stderr_text;
    if (result.stderr_truncated) out += "\n[stderr truncated]";
  }
  return out;
}

std::string CodeExecAgent::invoke(std::string_view payload, const InvocationContext&) {
  try {
    return render(run(payload, limits_, interpreter_));
  } catch (const ExecError& e) {
    throw ExecError(e.kind(), std::string(e.what()) + "\n" + render(e.result()), e.result());
  }
}

}  // namespace orchestra::codeexec
