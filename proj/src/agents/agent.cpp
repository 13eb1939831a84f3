#include "orchestra/agents/agent.hpp"

#include <cstdlib>

#include "orchestra/agents/codeexec.hpp"
#include "orchestra/agents/external.hpp"
#include "orchestra/agents/kgraph.hpp"
#include "orchestra/agents/longitudinal.hpp"
#include "orchestra/agents/retrieval.hpp"
#include "orchestra/agents/text2sql.hpp"
#include "orchestra/agents/websearch.hpp"
#include "orchestra/backend.hpp"
#include "orchestra/error.hpp"
#include "orchestra/text.hpp"

namespace orchestra {

using nlohmann::json;

namespace {

FixtureResponse fixture_response(const json& j) {
  if (j.is_string()) return {j.get<std::string>(), false};
  if (j.is_object() && j.contains("error")) return {j.at("error").get<std::string>(), true};
  throw Error(ErrorKind::SchemaViolation, "fixture response must be a string or {\"error\": text}");
}

std::filesystem::path resolve(const Registry& registry, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !registry.config().base_dir.empty()) path = registry.config().base_dir / path;
  return path;
}

std::string required_string(const ToolDescriptor& tool, const char* key) {
  const auto& c = tool.config;
  if (!c.contains(key) || !c.at(key).is_string()) {
    throw Error(ErrorKind::SchemaViolation, "tool '" + tool.name + "' needs a string setting \"" + key + "\"");
  }
  return c.at(key).get<std::string>();
}

std::shared_ptr<Agent> build_builtin(const ToolDescriptor& tool, const Registry& registry,
                                     const std::shared_ptr<Backend>& aux) {
  const auto& c = tool.config;
  const auto& id = tool.agent_id;
  if (id == "fixture") return FixtureAgent::from_json(c);
  if (id == "echo") return std::make_shared<EchoAgent>();
  if (id == "text2sql") {
    text2sql::Options o;
    o.row_cap = c.value("row_cap", o.row_cap);
    o.max_repairs = c.value("max_repairs", o.max_repairs);
    o.verify = c.value("verify", o.verify);
    return std::make_shared<text2sql::Text2SqlAgent>(resolve(registry, required_string(tool, "database")), aux, o);
  }
  if (id == "retrieval") {
    retrieval::ChunkParams p;
    p.chunk_tokens = c.value("chunk_tokens", p.chunk_tokens);
    p.overlap_tokens = c.value("overlap_tokens", p.overlap_tokens);
    auto corpus = retrieval::Corpus::from_directory(resolve(registry, required_string(tool, "corpus_dir")), p);
    return std::make_shared<retrieval::RetrievalAgent>(std::move(corpus), c.value("k", std::size_t{5}));
  }
  if (id == "websearch") {
    websearch::SearchParams p;
    p.k = c.value("k", p.k);
    p.window_tokens = c.value("window_tokens", p.window_tokens);
    p.max_context_bytes = c.value("max_context_bytes", p.max_context_bytes);
    p.fetch_timeout_ms = c.value("fetch_timeout_ms", p.fetch_timeout_ms);
    if (c.contains("fixture")) {
      auto fx = std::make_shared<const websearch::Fixture>(
          websearch::Fixture::load_file(resolve(registry, required_string(tool, "fixture"))));
      return std::make_shared<websearch::WebSearchAgent>(std::make_shared<websearch::FixtureProvider>(fx),
                                                         std::make_shared<websearch::FixtureFetcher>(fx), p);
    }
    if (c.value("provider", std::string()) == "bing") {
      const auto env_name = c.value("api_key_env", std::string("BING_API_KEY"));
      const char* key = std::getenv(env_name.c_str());
      auto provider = std::make_shared<websearch::BingProvider>(
          c.value("endpoint", std::string("https://api.bing.microsoft.com/v7.0/search")), key ? key : "",
          c.value("timeout_ms", 10000));
      return std::make_shared<websearch::WebSearchAgent>(provider, std::make_shared<websearch::HttpFetcher>(), p);
    }
    throw Error(ErrorKind::SchemaViolation, "tool '" + tool.name + "' needs \"fixture\" or \"provider\": \"bing\"");
  }
  if (id == "codeexec") {
    codeexec::Limits l;
    l.cpu_seconds = c.value("cpu_seconds", l.cpu_seconds);
    l.memory_bytes = c.value("memory_mb", l.memory_bytes >> 20) << 20;
    l.wall = std::chrono::milliseconds(c.value("wall_ms", static_cast<long long>(l.wall.count())));
    return std::make_shared<codeexec::CodeExecAgent>(c.value("interpreter", std::string("python3")), l);
  }
  if (id == "longitudinal") {
    longitudinal::TrendParams p;
    p.window = c.value("window", p.window);
    p.deltas = c.value("deltas", p.deltas);
    return std::make_shared<longitudinal::LongitudinalAgent>(resolve(registry, c.value("data_dir", std::string("."))),
                                                             p);
  }
  if (id == "kgraph") {
    return std::make_shared<kgraph::KGraphAgent>(aux, c.value("auto_ingest", true), c.value("k", std::size_t{5}));
  }
  throw Error(ErrorKind::SchemaViolation, "tool '" + tool.name + "' names unknown agent '" + id + "'");
}

}  // namespace

std::shared_ptr<FixtureAgent> FixtureAgent::from_json(const json& settings) {
  try {
    std::map<std::string, FixtureResponse> responses;
    if (auto it = settings.find("responses"); it != settings.end()) {
      for (const auto& [payload, response] : it->items()) {
        responses[std::string(text::trim(payload))] = fixture_response(response);
      }
    }
    std::optional<FixtureResponse> fallback;
    if (auto it = settings.find("fallback"); it != settings.end() && !it->is_null()) fallback = fixture_response(*it);
    return std::make_shared<FixtureAgent>(std::move(responses), std::move(fallback));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaViolation, std::string("bad fixture agent settings: ") + e.what());
  }
}

std::string FixtureAgent::invoke(std::string_view payload, const InvocationContext&) {
  const FixtureResponse* r = nullptr;
  if (auto it = responses_.find(std::string(text::trim(payload))); it != responses_.end()) {
    r = &it->second;
  } else if (fallback_) {
    r = &*fallback_;
  }
  if (!r) throw Error(ErrorKind::ExecutionFailed, "no fixture response for this query");
  if (r->error) throw Error(ErrorKind::ExecutionFailed, r->text);
  return r->text;
}

std::shared_ptr<AgentSet> AgentSet::build(const Registry& registry, std::shared_ptr<Backend> aux_backend) {
  auto set = std::make_shared<AgentSet>();
  for (const auto& tool : registry.tools()) {
    try {
      if (tool.kind == ToolKind::External) {
        set->bind(tool.name, std::make_shared<ExternalAgent>(tool.endpoint, tool.timeout_ms));
      } else {
        set->bind(tool.name, build_builtin(tool, registry, aux_backend));
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::SchemaViolation, "tool '" + tool.name + "': bad setting: " + e.what());
    }
  }
  return set;
}

void AgentSet::bind(const std::string& tool, std::shared_ptr<Agent> agent) { agents_[tool] = std::move(agent); }

Agent* AgentSet::resolve(std::string_view tool) const {
  auto it = agents_.find(tool);
  return it == agents_.end() ? nullptr : it->second.get();
}

void AgentSet::observe_all(std::string_view prose, const InvocationContext& context) const {
  for (const auto& [_, agent] : agents_) agent->observe(prose, context);
}

void AgentSet::end_trajectory(const std::string& trajectory_id) const {
  for (const auto& [_, agent] : agents_) agent->end_trajectory(trajectory_id);
}

}  // namespace orchestra
