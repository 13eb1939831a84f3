#include "orchestra/orchestra.h"

#include <cstdlib>
#include <cstring>
#include <sstream>

#include "orchestra/markers.hpp"
#include "orchestra/net.hpp"
#include "orchestra/runtime.hpp"
#include "orchestra/service.hpp"

struct orch_runtime {
  std::unique_ptr<orchestra::Runtime> rt;
};

struct orch_service {
  std::unique_ptr<orchestra::Service> svc;
};

namespace {

using orchestra::Error;
using orchestra::ErrorKind;
using nlohmann::json;

thread_local std::string g_last_error;

orch_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return ORCH_ERR_INVALID_ARGUMENT;
    case ErrorKind::Io: return ORCH_ERR_IO;
    case ErrorKind::SchemaViolation: return ORCH_ERR_SCHEMA_VIOLATION;
    case ErrorKind::DuplicateName: return ORCH_ERR_DUPLICATE_NAME;
    case ErrorKind::BadEndpoint: return ORCH_ERR_BAD_ENDPOINT;
    case ErrorKind::UnknownTool: return ORCH_ERR_UNKNOWN_TOOL;
    case ErrorKind::BadToolName: return ORCH_ERR_BAD_TOOL_NAME;
    case ErrorKind::MalformedRecord: return ORCH_ERR_MALFORMED_RECORD;
    case ErrorKind::AlreadyFinalized:
    case ErrorKind::IndexGap:
    case ErrorKind::PendingToolCall: return ORCH_ERR_TRACE_STATE;
    case ErrorKind::Timeout: return ORCH_ERR_TIMEOUT;
    case ErrorKind::RateLimited: return ORCH_ERR_RATE_LIMITED;
    case ErrorKind::ProtocolError: return ORCH_ERR_PROTOCOL;
    case ErrorKind::Unreachable: return ORCH_ERR_UNREACHABLE;
    case ErrorKind::NoScriptMatch: return ORCH_ERR_NO_SCRIPT_MATCH;
    case ErrorKind::BudgetExhausted: return ORCH_ERR_BUDGET_EXHAUSTED;
    case ErrorKind::MissingAnswerBlock: return ORCH_ERR_MISSING_ANSWER;
    case ErrorKind::MalformedGeneration: return ORCH_ERR_MALFORMED_GENERATION;
    case ErrorKind::NonSelectRejected:
    case ErrorKind::ExecutionFailed:
    case ErrorKind::SchemaUnavailable:
    case ErrorKind::EmptyCorpus:
    case ErrorKind::ProviderUnavailable:
    case ErrorKind::FetchTimeout:
    case ErrorKind::TimeLimit:
    case ErrorKind::MemoryLimit:
    case ErrorKind::NonZeroExit:
    case ErrorKind::EmptySeries:
    case ErrorKind::RemoteError: return ORCH_ERR_AGENT;
    case ErrorKind::EmptyList:
    case ErrorKind::LengthMismatch:
    case ErrorKind::EmptyMatrix: return ORCH_ERR_EVAL;
    case ErrorKind::NetworkForbidden: return ORCH_ERR_NETWORK_FORBIDDEN;
  }
  return ORCH_ERR_INTERNAL;
}

template <typename F>
orch_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return ORCH_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return ORCH_ERR_SCHEMA_VIOLATION;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return ORCH_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ORCH_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return ORCH_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size());
  out[s.size()] = '\0';
  return out;
}

void require(const void* p, const char* name) {
  if (!p) throw Error(ErrorKind::InvalidArgument, std::string(name) + " must not be NULL");
}

json parse_json_arg(const char* text, const char* name) {
  if (!text || !*text) return json::object();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidArgument, std::string(name) + " is not valid JSON: " + e.what());
  }
}

}  // namespace

extern "C" {

const char* orch_version(void) { return "0.1.0"; }

const char* orch_status_name(orch_status status) {
  switch (status) {
    case ORCH_OK: return "ok";
    case ORCH_ERR_INVALID_ARGUMENT: return "invalid argument";
    case ORCH_ERR_IO: return "i/o error";
    case ORCH_ERR_SCHEMA_VIOLATION: return "schema violation";
    case ORCH_ERR_DUPLICATE_NAME: return "duplicate name";
    case ORCH_ERR_BAD_ENDPOINT: return "bad endpoint";
    case ORCH_ERR_UNKNOWN_TOOL: return "unknown tool";
    case ORCH_ERR_BAD_TOOL_NAME: return "bad tool name";
    case ORCH_ERR_MALFORMED_RECORD: return "malformed record";
    case ORCH_ERR_TRACE_STATE: return "trace state error";
    case ORCH_ERR_TIMEOUT: return "timeout";
    case ORCH_ERR_RATE_LIMITED: return "rate limited";
    case ORCH_ERR_PROTOCOL: return "protocol error";
    case ORCH_ERR_UNREACHABLE: return "unreachable";
    case ORCH_ERR_NO_SCRIPT_MATCH: return "no script match";
    case ORCH_ERR_BUDGET_EXHAUSTED: return "budget exhausted";
    case ORCH_ERR_MISSING_ANSWER: return "missing answer block";
    case ORCH_ERR_MALFORMED_GENERATION: return "malformed generation";
    case ORCH_ERR_AGENT: return "tool agent error";
    case ORCH_ERR_EVAL: return "evaluation error";
    case ORCH_ERR_NETWORK_FORBIDDEN: return "network forbidden";
    case ORCH_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* orch_last_error(void) { return g_last_error.c_str(); }

void orch_string_free(char* s) { std::free(s); }

orch_status orch_set_network_policy(int policy) {
  return guarded([&] {
    if (policy < 0 || policy > 2) throw Error(ErrorKind::InvalidArgument, "network policy must be 0, 1 or 2");
    orchestra::net::set_policy(static_cast<orchestra::net::Policy>(policy));
  });
}

orch_status orch_runtime_create(const char* flags_json, const char* config_path, orch_runtime** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    const json flags = parse_json_arg(flags_json, "flags_json");
    json file = json::object();
    std::filesystem::path dir;
    if (config_path && *config_path) {
      file = orchestra::load_config_file(config_path);
      dir = std::filesystem::path(config_path).parent_path();
    }
    auto config = orchestra::resolve_config(orchestra::environment_layer(), flags, file, dir);
    auto rt = std::make_unique<orch_runtime>();
    rt->rt = orchestra::Runtime::create(std::move(config));
    *out = rt.release();
  });
}

void orch_runtime_free(orch_runtime* rt) { delete rt; }

orch_status orch_runtime_config(const orch_runtime* rt, char** out_json) {
  return guarded([&] {
    require(rt, "rt");
    require(out_json, "out_json");
    *out_json = dup_string(orchestra::to_json(rt->rt->config()).dump(2));
  });
}

orch_status orch_run_case(const orch_runtime* rt, const char* question_json, char** out_summary_json, int* exit_code) {
  return guarded([&] {
    require(rt, "rt");
    require(question_json, "question_json");
    json q = parse_json_arg(question_json, "question_json");
    if (!q.contains("id")) q["id"] = "q";
    const auto question = orchestra::eval::parse_question(q);
    const auto outcome = orchestra::run_command(*rt->rt, question);
    if (exit_code) *exit_code = outcome.exit_code;
    if (out_summary_json) {
      *out_summary_json = dup_string(orchestra::case_summary(question, outcome.result).dump(2));
    }
  });
}

orch_status orch_bench(const orch_runtime* rt, const char* dataset_path, char** out_report_json, char** out_table) {
  return guarded([&] {
    require(rt, "rt");
    std::filesystem::path path = dataset_path && *dataset_path ? std::filesystem::path(dataset_path)
                                                               : rt->rt->config().dataset;
    if (path.empty()) throw Error(ErrorKind::InvalidArgument, "no dataset given");
    const auto dataset = orchestra::eval::load_dataset(path);
    const auto outcome = orchestra::bench_command(*rt->rt, dataset);
    if (out_report_json) *out_report_json = dup_string(outcome.report.dump(2));
    if (out_table) *out_table = dup_string(outcome.table);
  });
}

orch_status orch_trace_render(const char* trace_path, const char* question_id, char** out_text) {
  return guarded([&] {
    require(trace_path, "trace_path");
    require(out_text, "out_text");
    const auto records = orchestra::read_trace_file(trace_path);
    std::optional<std::string> qid;
    if (question_id && *question_id) qid = question_id;
    *out_text = dup_string(orchestra::render_trace(records, qid));
  });
}

orch_status orch_tools_validate(const char* registry_path, int probe, char** out_report) {
  std::string report;
  const auto status = guarded([&] {
    require(registry_path, "registry_path");
    const auto registry = orchestra::Registry::load_file(registry_path);
    std::ostringstream out;
    out << registry_path << ": " << registry.size() << " tool" << (registry.size() == 1 ? "" : "s") << "\n";
    std::vector<std::string> unreachable;
    for (const auto& t : registry.tools()) {
      out << "  " << t.name << " ("
          << (t.kind == orchestra::ToolKind::External ? "external " + t.endpoint : "builtin " + t.agent_id) << ")";
      if (probe && t.kind == orchestra::ToolKind::External) {
        const auto url = orchestra::net::Url::parse(t.endpoint);
        bool ok = false;
        try {
          ok = url && orchestra::net::reachable(*url, std::min(t.timeout_ms, 5000));
        } catch (const Error&) {
          ok = false;
        }
        out << (ok ? " reachable" : " UNREACHABLE");
        if (!ok) unreachable.push_back(t.name);
      }
      out << "\n";
    }
    report = out.str();
    if (!unreachable.empty()) {
      std::string names;
      for (const auto& n : unreachable) names += (names.empty() ? "" : ", ") + n;
      throw Error(ErrorKind::Unreachable, "unreachable external tool endpoint(s): " + names);
    }
  });
  if (out_report) {
    try {
      *out_report = dup_string(status == ORCH_OK ? report : report + g_last_error + "\n");
    } catch (...) {
      *out_report = nullptr;
    }
  }
  return status;
}

orch_status orch_registry_render(const char* registry_path, char** out_text) {
  return guarded([&] {
    require(registry_path, "registry_path");
    require(out_text, "out_text");
    *out_text = dup_string(orchestra::render_context(orchestra::Registry::load_file(registry_path)));
  });
}

orch_status orch_service_start(orch_runtime* rt, const char* host, int port, orch_service** out) {
  std::unique_ptr<orch_runtime> owned(rt);
  return guarded([&] {
    require(owned.get(), "rt");
    require(out, "out");
    *out = nullptr;
    orchestra::ServiceOptions options;
    if (host && *host) options.host = host;
    options.port = port;
    auto svc = std::make_unique<orch_service>();
    svc->svc = std::make_unique<orchestra::Service>(std::move(owned->rt), options);
    svc->svc->start();
    *out = svc.release();
  });
}

int orch_service_port(const orch_service* svc) { return svc ? svc->svc->port() : -1; }

orch_status orch_service_wait(orch_service* svc) {
  return guarded([&] {
    require(svc, "svc");
    svc->svc->wait();
  });
}

orch_status orch_service_stop(orch_service* svc) {
  return guarded([&] {
    require(svc, "svc");
    svc->svc->stop();
  });
}

void orch_service_free(orch_service* svc) { delete svc; }

orch_status orch_scan(const char* buffer, size_t length, char** out_event_json) {
  return guarded([&] {
    require(out_event_json, "out_event_json");
    if (!buffer && length) throw Error(ErrorKind::InvalidArgument, "buffer must not be NULL");
    namespace m = orchestra::markers;
    const auto event = m::scan(std::string_view(buffer ? buffer : "", length));
    json j;
    if (const auto* p = std::get_if<m::Prose>(&event)) {
      j = {{"event", "prose"}, {"text", p->text}};
    } else if (const auto* q = std::get_if<m::ToolQuery>(&event)) {
      j = {{"event", "tool_query"}, {"tool", q->tool}, {"payload", q->payload}, {"consumed", q->consumed}};
    } else if (const auto* a = std::get_if<m::AnswerBlock>(&event)) {
      j = {{"event", "answer"}, {"text", a->text}, {"consumed", a->consumed}};
    } else if (const auto* i = std::get_if<m::Incomplete>(&event)) {
      j = {{"event", "incomplete"}, {"tool", i->tool}};
    } else {
      const auto& e = std::get<m::ScanError>(event);
      j = {{"event", "error"}, {"kind", std::string(m::to_string(e.kind))}, {"offset", e.offset}, {"detail", e.detail}};
    }
    *out_event_json = dup_string(j.dump(-1, ' ', false, json::error_handler_t::replace));
  });
}

orch_status orch_render_query(const char* tool, const char* payload, char** out) {
  return guarded([&] {
    require(tool, "tool");
    require(out, "out");
    *out = dup_string(orchestra::markers::render_query(tool, payload ? payload : ""));
  });
}

orch_status orch_render_result(const char* tool, const char* payload, char** out) {
  return guarded([&] {
    require(tool, "tool");
    require(out, "out");
    *out = dup_string(orchestra::markers::render_result(tool, payload ? payload : ""));
  });
}

}  // extern "C"
