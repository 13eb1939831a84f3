#include "orchestra/registry.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "orchestra/error.hpp"
#include "orchestra/net.hpp"

namespace orchestra {

using nlohmann::json;

namespace {

[[noreturn]] void schema(const std::string& what) {
  throw Error(ErrorKind::SchemaViolation, "registry schema violation: " + what);
}

std::string req_string(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) schema(where + ": '" + key + "' must be a string");
  return it->get<std::string>();
}

std::string opt_string(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) schema(where + ": '" + key + "' must be a string");
  return it->get<std::string>();
}

ToolDescriptor parse_tool(const json& j, std::size_t index) {
  std::string where = "tools[" + std::to_string(index) + "]";
  if (!j.is_object()) schema(where + " is not an object");

  ToolDescriptor d;
  d.name = req_string(j, "name", where);
  where += " (" + d.name + ")";
  if (!markers::valid_tool_name(d.name)) schema(where + ": name must match [A-Za-z0-9_]{1,64}");
  d.description = req_string(j, "description", where);
  d.input_spec = req_string(j, "input_spec", where);
  d.output_spec = req_string(j, "output_spec", where);

  if (auto it = j.find("usage_examples"); it != j.end()) {
    if (!it->is_array()) schema(where + ": usage_examples must be an array");
    for (const auto& ex : *it) {
      if (!ex.is_object()) schema(where + ": usage example must be an object");
      d.usage_examples.push_back({req_string(ex, "query", where), req_string(ex, "result", where)});
    }
  }

  const std::string kind = req_string(j, "kind", where);
  if (kind == "builtin") {
    d.kind = ToolKind::Builtin;
    d.agent_id = opt_string(j, "agent_id", where);
    if (d.agent_id.empty()) d.agent_id = d.name;
  } else if (kind == "external") {
    d.kind = ToolKind::External;
    d.endpoint = opt_string(j, "endpoint", where);
    if (!net::Url::parse(d.endpoint)) {
      throw Error(ErrorKind::BadEndpoint, where + ": endpoint '" + d.endpoint + "' is not an absolute http(s) URL");
    }
  } else {
    schema(where + ": kind must be \"builtin\" or \"external\"");
  }

  if (auto it = j.find("timeout_ms"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<long long>() <= 0) schema(where + ": timeout_ms must be a positive integer");
    d.timeout_ms = it->get<int>();
  }
  if (auto it = j.find("aliases"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) schema(where + ": aliases must be an array");
    for (const auto& a : *it) {
      if (!a.is_string() || a.get<std::string>().empty()) schema(where + ": alias must be a non-empty string");
      d.aliases.push_back(a.get<std::string>());
    }
  }
  if (auto it = j.find("config"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) schema(where + ": config must be an object");
    d.config = *it;
  }
  return d;
}

void render_tool(std::string& out, const ToolDescriptor& d, Verbosity verbosity) {
  out += "## " + d.name + "\n";
  out += d.description + "\n";
  out += "Usage:\n" + markers::begin_query(d.name) + "\n" + d.input_spec + "\n" + markers::end_query(d.name) + "\n";
  out += "Input: " + d.input_spec + "\n";
  out += "Output: " + d.output_spec + "\n";
  if (d.kind == ToolKind::Builtin) {
    out += "Provider: builtin agent " + d.agent_id + "\n";
  } else {
    out += "Provider: external service " + d.endpoint + " (timeout " + std::to_string(d.timeout_ms) + " ms)\n";
  }
  if (!d.aliases.empty()) {
    out += "Also invoked as:";
    for (const auto& a : d.aliases) out += " " + a;
    out += "\n";
  }
  if (verbosity == Verbosity::Full) {
    for (std::size_t i = 0; i < d.usage_examples.size(); ++i) {
      out += "Example " + std::to_string(i + 1) + " query: " + d.usage_examples[i].query + "\n";
      out += "Example " + std::to_string(i + 1) + " result: " + d.usage_examples[i].result + "\n";
    }
  }
  out += "\n";
}

}  // namespace

Registry Registry::from_config(RegistryConfig config) {
  if (config.tools.empty() && !config.allow_empty) {
    schema("registry has no tools and allow_empty is not set");
  }
  Registry r;
  std::set<std::string, std::less<>> names;
  for (const auto& t : config.tools) {
    if (!names.insert(t.name).second) {
      throw Error(ErrorKind::DuplicateName, "duplicate tool name '" + t.name + "'");
    }
  }
  for (const auto& t : config.tools) {
    for (const auto& a : t.aliases) {
      if (names.contains(a) || !r.aliases_.emplace(a, t.name).second) {
        throw Error(ErrorKind::DuplicateName, "duplicate alias '" + a + "'");
      }
    }
  }
  r.config_ = std::move(config);
  return r;
}

Registry Registry::load(const json& doc, std::filesystem::path base_dir) {
  if (!doc.is_object()) schema("document is not an object");
  RegistryConfig cfg;
  cfg.system_preamble = req_string(doc, "system_preamble", "registry");
  cfg.answer_instructions = req_string(doc, "answer_instructions", "registry");
  auto tools = doc.find("tools");
  if (tools == doc.end() || !tools->is_array()) schema("'tools' must be an array");
  for (std::size_t i = 0; i < tools->size(); ++i) cfg.tools.push_back(parse_tool((*tools)[i], i));
  if (auto it = doc.find("allow_empty"); it != doc.end()) {
    if (!it->is_boolean()) schema("'allow_empty' must be a boolean");
    cfg.allow_empty = it->get<bool>();
  }
  if (auto it = doc.find("verbosity"); it != doc.end()) {
    if (*it == "full") {
      cfg.verbosity = Verbosity::Full;
    } else if (*it == "summary") {
      cfg.verbosity = Verbosity::Summary;
    } else {
      schema("'verbosity' must be \"full\" or \"summary\"");
    }
  }
  cfg.base_dir = std::move(base_dir);
  return from_config(std::move(cfg));
}

Registry Registry::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open registry file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    schema(path.string() + ": " + e.what());
  }
  return load(doc, std::filesystem::absolute(path).parent_path());
}

const ToolDescriptor* Registry::find(std::string_view name) const {
  for (const auto& t : config_.tools) {
    if (t.name == name) return &t;
  }
  if (auto canonical = markers::alias_map(name, aliases_)) return find(*canonical);
  return nullptr;
}

const ToolDescriptor& Registry::lookup(std::string_view name) const {
  if (const auto* d = find(name)) return *d;
  throw Error(ErrorKind::UnknownTool, "unknown tool '" + std::string(name) + "'");
}

std::vector<std::string> Registry::stop_sequences() const {
  std::vector<std::string> out;
  for (const auto& t : config_.tools) out.push_back(markers::end_query(t.name));
  out.emplace_back(markers::kAnswerEnd);
  return out;
}

std::string render_context(const Registry& registry, const RenderOptions& options) {
  const auto& cfg = registry.config();
  std::string out = cfg.system_preamble + "\n\n";
  if (!options.strategy_preamble.empty()) out += options.strategy_preamble + "\n\n";

  std::vector<const ToolDescriptor*> order;
  for (const auto& name : options.tool_priority) {
    if (const auto* d = registry.find(name); d && std::find(order.begin(), order.end(), d) == order.end()) {
      order.push_back(d);
    }
  }
  for (const auto& t : cfg.tools) {
    if (std::find(order.begin(), order.end(), &t) == order.end()) order.push_back(&t);
  }

  if (!order.empty()) {
    out += "# Tools\n\n";
    for (const auto* d : order) render_tool(out, *d, cfg.verbosity);
  }
  out += cfg.answer_instructions;
  return out;
}

}  // namespace orchestra
