#include <doctest.h>

#include "helpers.hpp"
#include "orchestra/error.hpp"
#include "orchestra/registry.hpp"

using namespace orchestra;
using testing::json;

namespace {

ErrorKind load_error(const json& doc) {
  try {
    Registry::load(doc);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected load to fail");
  return ErrorKind::Io;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

json two_tools() {
  auto sql = testing::tool_json("sql", "echo");
  sql["aliases"] = {"[SQL_QUERY]"};
  sql["usage_examples"] = {{{"query", "SELECT count(*) FROM visits"}, {"result", "42"}}};
  return testing::registry_json({sql, testing::tool_json("retrieve", "echo")});
}

}  // namespace

TEST_CASE("a valid document loads every tool") {
  const auto r = Registry::load(two_tools());
  CHECK(r.size() == 2);
  CHECK(r.tools()[0].name == "sql");
  CHECK(r.tools()[1].agent_id == "echo");
}

TEST_CASE("invalid documents fail with the right kind") {
  auto dup = two_tools();
  dup["tools"][1]["name"] = "sql";
  CHECK(load_error(dup) == ErrorKind::DuplicateName);

  auto alias_clash = two_tools();
  alias_clash["tools"][1]["aliases"] = {"[SQL_QUERY]"};
  CHECK(load_error(alias_clash) == ErrorKind::DuplicateName);

  json ext = testing::tool_json("vqa", "");
  ext["kind"] = "external";
  ext.erase("agent_id");
  ext["endpoint"] = "not a url";
  CHECK(load_error(testing::registry_json({ext})) == ErrorKind::BadEndpoint);
  ext["endpoint"] = "/relative/path";
  CHECK(load_error(testing::registry_json({ext})) == ErrorKind::BadEndpoint);

  auto missing = two_tools();
  missing["tools"][0].erase("description");
  CHECK(load_error(missing) == ErrorKind::SchemaViolation);

  auto bad_kind = two_tools();
  bad_kind["tools"][0]["kind"] = "plugin";
  CHECK(load_error(bad_kind) == ErrorKind::SchemaViolation);

  auto bad_name = two_tools();
  bad_name["tools"][0]["name"] = "sql query";
  CHECK(load_error(bad_name) == ErrorKind::SchemaViolation);

  CHECK(load_error(testing::registry_json(json::array())) == ErrorKind::SchemaViolation);
}

TEST_CASE("an explicitly empty registry renders preamble and instructions only") {
  auto doc = testing::registry_json(json::array());
  doc["allow_empty"] = true;
  const auto r = Registry::load(doc);
  const auto text = render_context(r);
  CHECK(text == "You are a careful clinical assistant.\n\nWrap the final answer in <|begin_answer|> and <|end_answer|>.");
}

TEST_CASE("each tool contributes one query exemplar and rendering is stable") {
  const auto r = Registry::load(two_tools());
  const auto text = render_context(r);
  CHECK(count(text, "<|begin_sql_query|>") == 1);
  CHECK(count(text, "<|begin_retrieve_query|>") == 1);
  CHECK(count(text, "_query|>") == 4);  // begin and end for each tool
  CHECK(text == render_context(Registry::load(two_tools())));
  CHECK(text.find("sql") < text.find("retrieve"));
  CHECK(text.find("SELECT count(*) FROM visits") != std::string::npos);
}

TEST_CASE("strategy preambles sit between the base preamble and the tools") {
  const auto r = Registry::load(two_tools());
  const auto text = render_context(r, {"Start from imaging.", {"retrieve"}});
  const auto pre = text.find("You are a careful");
  const auto strategy = text.find("Start from imaging.");
  const auto first_tool = text.find("<|begin_");
  CHECK(pre < strategy);
  CHECK(strategy < first_tool);
  CHECK(text.find("<|begin_retrieve_query|>") < text.find("<|begin_sql_query|>"));
}

TEST_CASE("lookup resolves names and aliases") {
  const auto r = Registry::load(two_tools());
  CHECK(r.lookup("sql").name == "sql");
  CHECK(r.lookup("[SQL_QUERY]").name == "sql");
  CHECK(r.find("xray") == nullptr);
  try {
    r.lookup("xray");
    FAIL("expected UnknownTool");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownTool);
  }
}

TEST_CASE("stop sequences cover every query end and the answer end") {
  const auto stops = Registry::load(two_tools()).stop_sequences();
  CHECK(std::find(stops.begin(), stops.end(), "<|end_sql_query|>") != stops.end());
  CHECK(std::find(stops.begin(), stops.end(), "<|end_retrieve_query|>") != stops.end());
  CHECK(std::find(stops.begin(), stops.end(), "<|end_answer|>") != stops.end());
}

TEST_CASE("property: changing any descriptor field changes the rendering") {
  const auto base = render_context(Registry::load(two_tools()));
  const std::vector<std::pair<std::string, json>> edits = {
      {"name", "sql2"},
      {"description", "Different capability."},
      {"input_spec", "a number"},
      {"output_spec", "a table"},
      {"usage_examples", json::array({{{"query", "SELECT 2"}, {"result", "2"}}})},
  };
  for (const auto& [field, value] : edits) {
    auto doc = two_tools();
    doc["tools"][0][field] = value;
    CHECK_MESSAGE(render_context(Registry::load(doc)) != base, field);
  }
}

TEST_CASE("property: lookup is total over declared names and aliases only") {
  auto& g = testing::rng();
  for (int round = 0; round < 50; ++round) {
    const int n = 1 + static_cast<int>(g() % 6);
    json tools = json::array();
    std::vector<std::string> names;
    for (int i = 0; i < n; ++i) {
      auto t = testing::tool_json("t" + std::to_string(round) + "_" + std::to_string(i), "echo");
      t["aliases"] = {"[T" + std::to_string(i) + "_QUERY]"};
      names.push_back(t["name"]);
      tools.push_back(t);
    }
    const auto r = testing::registry_of(tools);
    for (int i = 0; i < n; ++i) {
      CHECK(r.lookup(names[i]).name == names[i]);
      CHECK(r.lookup("[T" + std::to_string(i) + "_QUERY]").name == names[i]);
    }
    CHECK(r.find("t" + std::to_string(round) + "_" + std::to_string(n)) == nullptr);
    CHECK(r.find("[T" + std::to_string(n) + "_QUERY]") == nullptr);
  }
}

TEST_CASE("registry files resolve relative to their directory") {
  testing::TempDir dir;
  testing::write_file(dir / "cfg" / "registry.json", two_tools().dump());
  const auto r = Registry::load_file(dir / "cfg" / "registry.json");
  CHECK(r.config().base_dir == dir / "cfg");
  CHECK_THROWS_AS(Registry::load_file(dir / "missing.json"), Error);
}

TEST_CASE("summary verbosity omits usage examples") {
  auto doc = two_tools();
  doc["verbosity"] = "summary";
  const auto text = render_context(Registry::load(doc));
  CHECK(text.find("SELECT count(*) FROM visits") == std::string::npos);
  CHECK(text.find("<|begin_sql_query|>") != std::string::npos);
}
