#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "orchestra/engine.hpp"
#include "orchestra/eval.hpp"

// Configuration and the operator commands shared by the CLI, the service and
// the C API.
namespace orchestra {

struct BackendSpec {
  std::string kind = "scripted";  // "scripted" or "http"
  std::filesystem::path script;   // scripted
  std::string base_url;           // http
  std::string model;
  std::string api_key;
  int timeout_ms = 120000;
  int max_attempts = 3;
};

struct RunConfig {
  std::filesystem::path registry;
  BackendSpec backend;
  std::filesystem::path dataset;
  std::size_t k = 1;
  std::filesystem::path strategy_file;  // JSON array of strategies; empty = defaults
  EngineOptions engine;
  std::filesystem::path output_dir = "orchestra-out";
  std::int64_t seed = 0;
  std::size_t workers = 0;  // service worker threads; 0 = CPU count
  std::size_t queue_capacity = 16;

  /// Throws InvalidArgument (bad values) or Io (missing paths, naming them).
  void validate() const;
};

/// Layers are JSON objects with RunConfig's field names (nested "backend" and
/// "budget" objects). Later layers override earlier ones: environment, then
/// flags, then the config file. Relative paths in the file layer resolve
/// against `file_dir`.
RunConfig resolve_config(const nlohmann::json& env_layer, const nlohmann::json& flag_layer,
                         const nlohmann::json& file_layer, const std::filesystem::path& file_dir = {});

/// ORCHESTRA_BASE_URL and ORCHESTRA_API_KEY as a config layer.
nlohmann::json environment_layer();

/// Reads a JSON config file. Throws Io or SchemaViolation.
nlohmann::json load_config_file(const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& config);

/// Registry, backend, agents and engine built from one validated config.
class Runtime {
 public:
  /// Throws on any config problem; nothing is generated.
  static std::unique_ptr<Runtime> create(RunConfig config);

  const RunConfig& config() const { return config_; }
  const Engine& engine() const { return *engine_; }
  const Registry& registry() const { return engine_->registry(); }

  /// Strategy file if configured, else the defaults for k.
  std::vector<StrategyDescriptor> strategies(std::size_t k) const;

  CaseResult run_case(const Question& question, std::size_t k, TraceStore* store) const;

 private:
  Runtime(RunConfig config, std::unique_ptr<Engine> engine) : config_(std::move(config)), engine_(std::move(engine)) {}
  RunConfig config_;
  std::unique_ptr<Engine> engine_;
};

std::shared_ptr<Backend> make_backend(const BackendSpec& spec);

struct RunOutcome {
  CaseResult result;
  eval::Answer answer;  // majority over normalized answers
  int exit_code = 0;    // 0 answered, 2 every trajectory ran out of budget, 3 every trajectory failed otherwise
};

nlohmann::json case_summary(const Question& question, const CaseResult& result);

/// Appends traces to <output_dir>/traces.jsonl and writes
/// <output_dir>/case-<id>.json.
RunOutcome run_command(const Runtime& runtime, const Question& question);

struct BenchOutcome {
  std::vector<eval::MetricsReport> reports;
  nlohmann::json report;  // what report.json holds
  std::string table;
};

/// Runs every question (which must carry a gold label) and scores best@1,
/// majority@k and best@k. Writes traces.jsonl (fresh), report.json and
/// report.txt under output_dir. Dataset problems abort before any generation.
BenchOutcome bench_command(const Runtime& runtime, const std::vector<Question>& dataset);

/// Human-readable trajectories: numbered turns with tool, query and result
/// (long results shortened with a length note), then the conclusion.
std::string render_trace(const std::vector<TrajectoryRecord>& trajectories,
                         const std::optional<std::string>& question_id = std::nullopt,
                         std::size_t max_result_chars = 600);

}  // namespace orchestra
