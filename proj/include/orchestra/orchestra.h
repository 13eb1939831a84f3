/* C interface to the orchestra runtime.
 *
 * Every function returns an orch_status. On failure a message is available
 * from orch_last_error() on the calling thread. Strings returned through
 * out-parameters are heap-allocated and released with orch_string_free().
 */
#ifndef ORCHESTRA_ORCHESTRA_H
#define ORCHESTRA_ORCHESTRA_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(ORCHESTRA_BUILDING)
#define ORCH_API __attribute__((visibility("default")))
#else
#define ORCH_API
#endif

typedef enum orch_status {
  ORCH_OK = 0,
  ORCH_ERR_INVALID_ARGUMENT = 1,
  ORCH_ERR_IO = 2,
  ORCH_ERR_SCHEMA_VIOLATION = 3,
  ORCH_ERR_DUPLICATE_NAME = 4,
  ORCH_ERR_BAD_ENDPOINT = 5,
  ORCH_ERR_UNKNOWN_TOOL = 6,
  ORCH_ERR_BAD_TOOL_NAME = 7,
  ORCH_ERR_MALFORMED_RECORD = 8,
  ORCH_ERR_TRACE_STATE = 9, /* AlreadyFinalized, IndexGap, PendingToolCall */
  ORCH_ERR_TIMEOUT = 10,
  ORCH_ERR_RATE_LIMITED = 11,
  ORCH_ERR_PROTOCOL = 12,
  ORCH_ERR_UNREACHABLE = 13,
  ORCH_ERR_NO_SCRIPT_MATCH = 14,
  ORCH_ERR_BUDGET_EXHAUSTED = 15,
  ORCH_ERR_MISSING_ANSWER = 16,
  ORCH_ERR_MALFORMED_GENERATION = 17,
  ORCH_ERR_AGENT = 18, /* any tool-agent failure */
  ORCH_ERR_EVAL = 19,  /* EmptyList, LengthMismatch, EmptyMatrix */
  ORCH_ERR_NETWORK_FORBIDDEN = 20,
  ORCH_ERR_INTERNAL = 99
} orch_status;

typedef struct orch_runtime orch_runtime;
typedef struct orch_service orch_service;

ORCH_API const char* orch_version(void);
ORCH_API const char* orch_status_name(orch_status status);
/* Message for the last failure on this thread; "" when none. */
ORCH_API const char* orch_last_error(void);
ORCH_API void orch_string_free(char* s);

/* 0 = allow, 1 = loopback only, 2 = deny all outbound requests. */
ORCH_API orch_status orch_set_network_policy(int policy);

/* Builds a runtime. `flags_json` (may be NULL) is the command-line layer;
 * `config_path` (may be NULL) is a JSON config file that overrides it; the
 * ORCHESTRA_* environment variables sit underneath both. */
ORCH_API orch_status orch_runtime_create(const char* flags_json, const char* config_path, orch_runtime** out);
ORCH_API void orch_runtime_free(orch_runtime* rt);
ORCH_API orch_status orch_runtime_config(const orch_runtime* rt, char** out_json);

/* Runs one question ({"question", "id"?, "label_set"?, "aliases"?, ...}).
 * Writes traces and a case summary to the output directory. `exit_code`
 * receives 0 (answered), 2 (every trajectory ran out of budget) or 3 (every
 * trajectory failed otherwise). */
ORCH_API orch_status orch_run_case(const orch_runtime* rt, const char* question_json, char** out_summary_json,
                                   int* exit_code);

/* Benchmarks a dataset file (NULL = the configured one). */
ORCH_API orch_status orch_bench(const orch_runtime* rt, const char* dataset_path, char** out_report_json,
                                char** out_table);

/* Renders a trace file; `question_id` may be NULL. */
ORCH_API orch_status orch_trace_render(const char* trace_path, const char* question_id, char** out_text);

/* Validates a registry file; with `probe` set, external endpoints must also
 * accept TCP connections. `out_report` lists the tools (or the problem). */
ORCH_API orch_status orch_tools_validate(const char* registry_path, int probe, char** out_report);
ORCH_API orch_status orch_registry_render(const char* registry_path, char** out_text);

/* Takes ownership of `rt` whether or not the call succeeds. */
ORCH_API orch_status orch_service_start(orch_runtime* rt, const char* host, int port, orch_service** out);
ORCH_API int orch_service_port(const orch_service* svc);
ORCH_API orch_status orch_service_wait(orch_service* svc);
ORCH_API orch_status orch_service_stop(orch_service* svc);
ORCH_API void orch_service_free(orch_service* svc);

/* Marker protocol helpers. The scan result is JSON:
 * {"event": "prose"|"tool_query"|"answer"|"incomplete"|"error", ...}. */
ORCH_API orch_status orch_scan(const char* buffer, size_t length, char** out_event_json);
ORCH_API orch_status orch_render_query(const char* tool, const char* payload, char** out);
ORCH_API orch_status orch_render_result(const char* tool, const char* payload, char** out);

#ifdef __cplusplus
}
#endif

#endif /* ORCHESTRA_ORCHESTRA_H */
