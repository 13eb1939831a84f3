#include "orchestra/runtime.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include "orchestra/text.hpp"

namespace orchestra {

using nlohmann::json;

namespace {

const std::set<std::string> kTopLevelKeys = {
    "registry",     "backend", "dataset",    "k",    "strategy_file",  "budget",        "answer_mode",
    "attach_prose", "max_result_context_bytes", "output_dir", "seed", "workers", "queue_capacity"};
const std::set<std::string> kBackendKeys = {"kind", "script", "base_url", "model", "api_key", "timeout_ms",
                                            "max_attempts"};
const std::set<std::string> kBudgetKeys = {"max_steps", "max_wall_seconds", "max_consecutive_tool_failures"};

void check_keys(const json& layer, const std::set<std::string>& allowed, const std::string& where) {
  if (!layer.is_object()) throw Error(ErrorKind::SchemaViolation, where + " must be a JSON object");
  for (const auto& [key, _] : layer.items()) {
    if (!allowed.count(key)) throw Error(ErrorKind::SchemaViolation, "unknown setting '" + where + key + "'");
  }
}

void check_layer(const json& layer) {
  if (layer.is_null()) return;
  check_keys(layer, kTopLevelKeys, "");
  if (layer.contains("backend")) check_keys(layer.at("backend"), kBackendKeys, "backend.");
  if (layer.contains("budget")) check_keys(layer.at("budget"), kBudgetKeys, "budget.");
}

// Rewrites relative paths in a file layer against the file's directory.
json anchor_paths(json layer, const std::filesystem::path& dir) {
  if (dir.empty() || !layer.is_object()) return layer;
  auto anchor = [&](json& j, const char* key) {
    if (j.contains(key) && j.at(key).is_string()) {
      std::filesystem::path p(j.at(key).get<std::string>());
      if (!p.empty() && p.is_relative()) j[key] = (dir / p).lexically_normal().string();
    }
  };
  for (const char* key : {"registry", "dataset", "strategy_file", "output_dir"}) anchor(layer, key);
  if (layer.contains("backend") && layer["backend"].is_object()) anchor(layer["backend"], "script");
  return layer;
}

std::string safe_name(const std::string& id) {
  std::string out;
  for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return out.empty() ? "case" : out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

}  // namespace

void RunConfig::validate() const {
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be at least 1");
  engine.budget.validate();
  if (registry.empty()) throw Error(ErrorKind::InvalidArgument, "no registry file configured");
  if (!std::filesystem::is_regular_file(registry)) {
    throw Error(ErrorKind::Io, "registry file not found: " + registry.string());
  }
  if (backend.kind == "scripted") {
    if (backend.script.empty()) throw Error(ErrorKind::InvalidArgument, "scripted backend needs a script file");
    if (!std::filesystem::is_regular_file(backend.script)) {
      throw Error(ErrorKind::Io, "script file not found: " + backend.script.string());
    }
  } else if (backend.kind == "http") {
    if (backend.base_url.empty()) throw Error(ErrorKind::InvalidArgument, "http backend needs a base URL");
    if (backend.model.empty()) throw Error(ErrorKind::InvalidArgument, "http backend needs a model name");
  } else {
    throw Error(ErrorKind::InvalidArgument, "backend kind must be 'scripted' or 'http', got '" + backend.kind + "'");
  }
  if (!dataset.empty() && !std::filesystem::is_regular_file(dataset)) {
    throw Error(ErrorKind::Io, "dataset file not found: " + dataset.string());
  }
  if (!strategy_file.empty() && !std::filesystem::is_regular_file(strategy_file)) {
    throw Error(ErrorKind::Io, "strategy file not found: " + strategy_file.string());
  }
  if (queue_capacity == 0) throw Error(ErrorKind::InvalidArgument, "queue_capacity must be at least 1");
}

json environment_layer() {
  json layer = json::object();
  if (const char* url = std::getenv("ORCHESTRA_BASE_URL"); url && *url) layer["backend"]["base_url"] = url;
  if (const char* key = std::getenv("ORCHESTRA_API_KEY"); key && *key) layer["backend"]["api_key"] = key;
  return layer;
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "config file not found: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::SchemaViolation, path.string() + ": " + e.what());
  }
}

RunConfig resolve_config(const json& env_layer, const json& flag_layer, const json& file_layer,
                         const std::filesystem::path& file_dir) {
  check_layer(env_layer);
  check_layer(flag_layer);
  check_layer(file_layer);
  json merged = json::object();
  for (const auto& layer : {env_layer, flag_layer, anchor_paths(file_layer, file_dir)}) {
    if (layer.is_object()) merged.merge_patch(layer);
  }

  RunConfig c;
  try {
    c.registry = merged.value("registry", std::string());
    c.dataset = merged.value("dataset", std::string());
    c.strategy_file = merged.value("strategy_file", std::string());
    c.output_dir = merged.value("output_dir", c.output_dir.string());
    c.k = merged.value("k", c.k);
    c.seed = merged.value("seed", c.seed);
    c.workers = merged.value("workers", c.workers);
    c.queue_capacity = merged.value("queue_capacity", c.queue_capacity);
    c.engine.attach_prose = merged.value("attach_prose", c.engine.attach_prose);
    c.engine.max_result_context_bytes = merged.value("max_result_context_bytes", c.engine.max_result_context_bytes);
    const auto mode = merged.value("answer_mode", std::string("strict"));
    if (mode == "strict") {
      c.engine.answer_mode = AnswerMode::Strict;
    } else if (mode == "lenient") {
      c.engine.answer_mode = AnswerMode::Lenient;
    } else {
      throw Error(ErrorKind::InvalidArgument, "answer_mode must be 'strict' or 'lenient'");
    }
    if (merged.contains("budget")) {
      const auto& b = merged.at("budget");
      auto& budget = c.engine.budget;
      budget.max_steps = b.value("max_steps", budget.max_steps);
      budget.max_wall_seconds = b.value("max_wall_seconds", budget.max_wall_seconds);
      budget.max_consecutive_tool_failures =
          b.value("max_consecutive_tool_failures", budget.max_consecutive_tool_failures);
    }
    const json b = merged.value("backend", json::object());
    c.backend.script = b.value("script", std::string());
    c.backend.base_url = b.value("base_url", std::string());
    c.backend.model = b.value("model", std::string());
    c.backend.api_key = b.value("api_key", std::string());
    c.backend.timeout_ms = b.value("timeout_ms", c.backend.timeout_ms);
    c.backend.max_attempts = b.value("max_attempts", c.backend.max_attempts);
    c.backend.kind = b.value("kind", std::string(!c.backend.script.empty() || c.backend.base_url.empty() ? "scripted"
                                                                                                          : "http"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaViolation, std::string("bad setting: ") + e.what());
  }
  return c;
}

json to_json(const RunConfig& c) {
  return {{"registry", c.registry.string()},
          {"backend",
           {{"kind", c.backend.kind},
            {"script", c.backend.script.string()},
            {"base_url", c.backend.base_url},
            {"model", c.backend.model},
            {"timeout_ms", c.backend.timeout_ms},
            {"max_attempts", c.backend.max_attempts}}},
          {"dataset", c.dataset.string()},
          {"k", c.k},
          {"strategy_file", c.strategy_file.string()},
          {"budget",
           {{"max_steps", c.engine.budget.max_steps},
            {"max_wall_seconds", c.engine.budget.max_wall_seconds},
            {"max_consecutive_tool_failures", c.engine.budget.max_consecutive_tool_failures}}},
          {"answer_mode", c.engine.answer_mode == AnswerMode::Strict ? "strict" : "lenient"},
          {"attach_prose", c.engine.attach_prose},
          {"max_result_context_bytes", c.engine.max_result_context_bytes},
          {"output_dir", c.output_dir.string()},
          {"seed", c.seed},
          {"workers", c.workers},
          {"queue_capacity", c.queue_capacity}};
}

std::shared_ptr<Backend> make_backend(const BackendSpec& spec) {
  if (spec.kind == "scripted") return std::shared_ptr<Backend>(ScriptedBackend::load_file(spec.script));
  HttpBackendConfig hc;
  hc.base_url = spec.base_url;
  hc.model = spec.model;
  hc.api_key = spec.api_key;
  hc.timeout_ms = spec.timeout_ms;
  RetryPolicy policy;
  policy.max_attempts = spec.max_attempts;
  return std::make_shared<RetryingBackend>(std::make_shared<HttpBackend>(hc), policy);
}

std::unique_ptr<Runtime> Runtime::create(RunConfig config) {
  config.validate();
  auto registry = Registry::load_file(config.registry);
  auto backend = make_backend(config.backend);
  auto agents = AgentSet::build(registry, backend);
  auto engine = std::make_unique<Engine>(std::move(registry), backend, agents, config.engine);
  auto rt = std::unique_ptr<Runtime>(new Runtime(std::move(config), std::move(engine)));
  rt->strategies(rt->config_.k);  // surface strategy-file problems now
  return rt;
}

std::vector<StrategyDescriptor> Runtime::strategies(std::size_t k) const {
  if (config_.strategy_file.empty()) return default_strategies(k, registry());
  const json j = load_config_file(config_.strategy_file);
  std::vector<StrategyDescriptor> out;
  try {
    for (const auto& s : j.at("strategies")) {
      StrategyDescriptor d;
      d.name = s.at("name").get<std::string>();
      d.preamble = s.value("preamble", std::string());
      d.temperature = s.value("temperature", 0.0);
      d.tool_priority_hint = s.value("tool_priority_hint", std::vector<std::string>{});
      if (d.temperature < 0.0 || d.temperature > 2.0) {
        throw Error(ErrorKind::SchemaViolation, "strategy '" + d.name + "' temperature must be in [0, 2]");
      }
      out.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaViolation, config_.strategy_file.string() + ": " + e.what());
  }
  if (out.empty()) throw Error(ErrorKind::SchemaViolation, config_.strategy_file.string() + ": no strategies");
  if (out.size() == 1 || out.size() == k) return out;
  if (out.size() > k) {
    out.resize(k);
    return out;
  }
  throw Error(ErrorKind::InvalidArgument, config_.strategy_file.string() + " lists " + std::to_string(out.size()) +
                                              " strategies; k = " + std::to_string(k) + " needs 1 or " +
                                              std::to_string(k));
}

CaseResult Runtime::run_case(const Question& question, std::size_t k, TraceStore* store) const {
  return engine_->run_case(question, k, strategies(k), config_.seed, store);
}

json case_summary(const Question& question, const CaseResult& result) {
  json answers = json::array();
  for (const auto& a : result.normalized_answers) answers.push_back(a ? json(*a) : json(nullptr));
  json trajectories = json::array();
  for (std::size_t i = 0; i < result.trajectories.size(); ++i) {
    const auto& t = result.trajectories[i];
    trajectories.push_back({{"strategy", t.strategy.name},
                            {"seed", t.seed},
                            {"answer", t.answer ? json(*t.answer) : json(nullptr)},
                            {"normalized", answers[i]},
                            {"steps", t.steps.size()},
                            {"error", t.error ? json(*t.error) : json(nullptr)}});
  }
  const auto majority = result.normalized_answers.empty() ? eval::Answer{} : eval::majority_at_k(result.normalized_answers);
  return {{"question_id", question.id},
          {"question", question.text},
          {"answer", majority ? json(*majority) : json(nullptr)},
          {"normalized_answers", answers},
          {"vote_fractions", result.vote_fractions},
          {"trajectories", trajectories}};
}

RunOutcome run_command(const Runtime& runtime, const Question& question) {
  const auto& out_dir = runtime.config().output_dir;
  std::filesystem::create_directories(out_dir);
  TraceStore store(out_dir / "traces.jsonl");
  RunOutcome outcome;
  outcome.result = runtime.run_case(question, runtime.config().k, &store);
  outcome.answer = eval::majority_at_k(outcome.result.normalized_answers);
  write_file(out_dir / ("case-" + safe_name(question.id) + ".json"), case_summary(question, outcome.result).dump(2) + "\n");

  bool all_failed = true, all_budget = true;
  for (const auto& f : outcome.result.failures) {
    if (!f) {
      all_failed = false;
      all_budget = false;
    } else if (*f != ErrorKind::BudgetExhausted) {
      all_budget = false;
    }
  }
  outcome.exit_code = all_budget ? 2 : all_failed ? 3 : 0;
  return outcome;
}

BenchOutcome bench_command(const Runtime& runtime, const std::vector<Question>& dataset) {
  if (dataset.empty()) throw Error(ErrorKind::EmptyList, "the dataset has no questions");
  // Everything that can be wrong with the dataset is checked before the
  // first generation.
  std::vector<std::string> labels;
  std::map<std::string, std::string> aliases;
  for (const auto& q : dataset) {
    if (!q.gold) throw Error(ErrorKind::SchemaViolation, "question '" + q.id + "' has no gold label");
    if (q.label_set.empty()) throw Error(ErrorKind::SchemaViolation, "question '" + q.id + "' has no label_set");
    for (const auto& l : q.label_set) {
      if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
    }
    for (const auto& [a, t] : q.aliases) aliases[a] = t;
  }
  const auto label_set = eval::LabelSet::make(labels, aliases);
  const std::size_t k = runtime.config().k;
  runtime.strategies(k);

  const auto& out_dir = runtime.config().output_dir;
  std::filesystem::create_directories(out_dir);
  std::filesystem::remove(out_dir / "traces.jsonl");
  TraceStore store(out_dir / "traces.jsonl");

  std::vector<eval::CaseOutcome> cases;
  json case_rows = json::array();
  for (const auto& q : dataset) {
    auto r = runtime.run_case(q, k, &store);
    json answers = json::array();
    for (const auto& a : r.normalized_answers) answers.push_back(a ? json(*a) : json(nullptr));
    case_rows.push_back({{"question_id", q.id}, {"gold", *q.gold}, {"answers", answers}});
    cases.push_back({q.id, *q.gold, std::move(r.normalized_answers)});
  }

  BenchOutcome out;
  out.reports = eval::evaluate_strategies(cases, label_set);
  out.report = {{"k", k},
                {"n_questions", dataset.size()},
                {"labels", labels},
                {"metrics", eval::to_json(out.reports)},
                {"cases", case_rows}};
  out.table = eval::render_table(out.reports);
  write_file(out_dir / "report.json", out.report.dump(2) + "\n");
  write_file(out_dir / "report.txt", out.table);
  return out;
}

namespace {

std::string indent(std::string_view s, std::string_view pad) {
  std::string out(pad);
  for (char c : s) {
    out += c;
    if (c == '\n') out += pad;
  }
  return out;
}

std::string shorten(const std::string& s, std::size_t max_chars) {
  if (s.size() <= max_chars) return s;
  std::size_t cut = max_chars;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return s.substr(0, cut) + "\n... [" + std::to_string(s.size() - cut) + " more bytes; " + std::to_string(s.size()) +
         " bytes in full]";
}

}  // namespace

std::string render_trace(const std::vector<TrajectoryRecord>& trajectories, const std::optional<std::string>& question_id,
                         std::size_t max_result_chars) {
  std::string out;
  std::size_t shown = 0;
  for (const auto& t : trajectories) {
    if (question_id && t.question_id != *question_id) continue;
    if (shown++) out += "\n";
    out += "=== " + t.question_id + " | strategy " + t.strategy.name + " | seed " + std::to_string(t.seed) + " ===\n";
    out += "Question:\n" + indent(t.question, "  ") + "\n";
    std::size_t turn = 0;
    for (const auto& step : t.steps) {
      if (!step.tool_call) continue;
      const auto& call = *step.tool_call;
      out += "\nTurn " + std::to_string(++turn) + "\n";
      if (!text::trim(step.prose).empty()) out += "  Reasoning:\n" + indent(text::trim(step.prose), "    ") + "\n";
      out += "  Tool: " + call.tool + "\n";
      out += "  Query:\n" + indent(call.query, "    ") + "\n";
      if (call.status == CallStatus::Error) {
        out += "  Error: " + call.error + "\n";
      } else if (call.result) {
        out += "  Result:\n" + indent(shorten(*call.result, max_result_chars), "    ") + "\n";
      } else {
        out += "  Result: (pending)\n";
      }
    }
    if (t.answer) {
      out += "\nConclusion\n";
      if (!t.steps.empty() && !t.steps.back().tool_call && !text::trim(t.steps.back().prose).empty()) {
        out += indent(text::trim(t.steps.back().prose), "  ") + "\n";
      }
      out += "  Answer: " + *t.answer + "\n";
    } else {
      out += "\nStopped without a conclusion";
      out += t.error ? ": " + *t.error + "\n" : "\n";
    }
  }
  if (shown == 0) {
    return question_id ? "no trajectories for question " + *question_id + "\n" : "no trajectories\n";
  }
  return out;
}

}  // namespace orchestra
