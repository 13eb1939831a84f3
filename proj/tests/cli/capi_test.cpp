// The C interface through the shared library, and the CLI binary end to end.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <string>

#include "orchestra/orchestra.h"
#include "tempdir.hpp"

using nlohmann::json;

namespace {

const std::string kData = ORCHESTRA_TEST_DATA_DIR;
const std::string kBenchConfig = kData + "/bench/config.json";

struct Owned {
  char* s = nullptr;
  ~Owned() { orch_string_free(s); }
  std::string str() const { return s ? s : ""; }
};

struct Cmd {
  int exit_code;
  std::string out;
};

/// Runs the CLI with stderr folded into stdout.
Cmd cli(const std::string& args) {
  const std::string cmd = std::string(ORCHESTRA_CLI) + " --network deny " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::string out;
  std::array<char, 4096> buf;
  while (std::size_t n = fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string quoted(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

std::string first_bench_question() {
  std::ifstream in(kData + "/bench/dataset.jsonl");
  std::string line;
  std::getline(in, line);
  return json::parse(line).at("question");
}

}  // namespace

TEST_CASE("status names and the version") {
  CHECK(std::string(orch_version()) == "0.1.0");
  CHECK(std::string(orch_status_name(ORCH_ERR_BUDGET_EXHAUSTED)) == "budget exhausted");
  CHECK(orch_set_network_policy(2) == ORCH_OK);
  CHECK(orch_set_network_policy(7) == ORCH_ERR_INVALID_ARGUMENT);
  CHECK(std::string(orch_last_error()).size() > 0);
}

TEST_CASE("marker helpers") {
  Owned q, r, ev;
  REQUIRE(orch_render_query("retrieve", "study 7", &q.s) == ORCH_OK);
  CHECK(q.str() == "<|begin_retrieve_query|>\nstudy 7\n<|end_retrieve_query|>");
  REQUIRE(orch_render_result("retrieve", "ok", &r.s) == ORCH_OK);
  CHECK(r.str() == "<|begin_retrieve_result|>\nok\n<|end_retrieve_result|>");
  const std::string buffer = "Thinking.\n" + q.str();
  REQUIRE(orch_scan(buffer.data(), buffer.size(), &ev.s) == ORCH_OK);
  const auto event = json::parse(ev.str());
  CHECK(event.at("event") == "tool_query");
  CHECK(event.at("tool") == "retrieve");
  CHECK(event.at("payload") == "study 7");

  Owned bad;
  CHECK(orch_render_query("bad name", "x", &bad.s) != ORCH_OK);
  CHECK(orch_render_query(nullptr, "x", &bad.s) == ORCH_ERR_INVALID_ARGUMENT);
}

TEST_CASE("runtime, run and bench through the C API") {
  testing::TempDir dir;
  orch_set_network_policy(2);
  const json flags = {{"output_dir", (dir / "out").string()}};
  orch_runtime* rt = nullptr;
  REQUIRE(orch_runtime_create(flags.dump().c_str(), kBenchConfig.c_str(), &rt) == ORCH_OK);

  Owned cfg;
  REQUIRE(orch_runtime_config(rt, &cfg.s) == ORCH_OK);
  CHECK(json::parse(cfg.str()).at("k") == 5);

  Owned summary;
  int exit_code = -1;
  const json question = {{"question", first_bench_question()}, {"id", "q01"}, {"label_set", {"AD", "MCI", "NC"}}};
  REQUIRE(orch_run_case(rt, question.dump().c_str(), &summary.s, &exit_code) == ORCH_OK);
  CHECK(exit_code == 0);
  CHECK(json::parse(summary.str()).at("trajectories").size() == 5);

  Owned report, table;
  REQUIRE(orch_bench(rt, nullptr, &report.s, &table.s) == ORCH_OK);
  CHECK(json::parse(report.str()).at("n_questions") == 20);
  CHECK(table.str().find("best@5") != std::string::npos);

  Owned text;
  REQUIRE(orch_trace_render((dir / "out" / "traces.jsonl").c_str(), "q01", &text.s) == ORCH_OK);
  CHECK(text.str().find("=== q01 |") == 0);
  orch_runtime_free(rt);

  orch_runtime* missing = nullptr;
  CHECK(orch_runtime_create(R"({"registry": "/nonexistent.json"})", nullptr, &missing) == ORCH_ERR_IO);
  CHECK(missing == nullptr);
  CHECK(orch_runtime_create("{not json", nullptr, &missing) == ORCH_ERR_INVALID_ARGUMENT);
}

TEST_CASE("registry validation through the C API") {
  testing::TempDir dir;
  Owned ok;
  REQUIRE(orch_tools_validate((kData + "/bench/registry.json").c_str(), 0, &ok.s) == ORCH_OK);
  CHECK(ok.str().find("records") != std::string::npos);

  const auto reg = json::parse(testing::read_file(kData + "/bench/registry.json"));
  auto dup = reg;
  dup["tools"].push_back(reg["tools"][0]);
  testing::write_file(dir / "dup.json", dup.dump());
  Owned bad;
  CHECK(orch_tools_validate((dir / "dup.json").c_str(), 0, &bad.s) == ORCH_ERR_DUPLICATE_NAME);

  Owned rendered;
  REQUIRE(orch_registry_render((kData + "/bench/registry.json").c_str(), &rendered.s) == ORCH_OK);
  CHECK(rendered.str().find("<|begin_records_query|>") != std::string::npos);
}

TEST_CASE("service lifecycle through the C API") {
  testing::TempDir dir;
  orch_set_network_policy(1);
  const json flags = {{"output_dir", (dir / "out").string()}};
  orch_runtime* rt = nullptr;
  REQUIRE(orch_runtime_create(flags.dump().c_str(), kBenchConfig.c_str(), &rt) == ORCH_OK);
  orch_service* svc = nullptr;
  REQUIRE(orch_service_start(rt, "127.0.0.1", 0, &svc) == ORCH_OK);
  CHECK(orch_service_port(svc) > 0);
  CHECK(orch_service_stop(svc) == ORCH_OK);
  orch_service_free(svc);
  orch_set_network_policy(2);
}

TEST_CASE("cli: run answers, exits 2 on budget, 1 on bad config") {
  testing::TempDir dir;
  const std::string common = " --config " + kBenchConfig + " --output-dir " + (dir / "out").string() + " ";

  const auto ok = cli("run" + common + "--labels AD,MCI,NC " + quoted(first_bench_question()));
  CHECK(ok.exit_code == 0);
  CHECK((ok.out == "AD\n" || ok.out == "MCI\n" || ok.out == "NC\n"));

  const auto budget = cli("run" + common + "--max-steps 1 " + quoted(first_bench_question()));
  CHECK(budget.exit_code == 2);
  CHECK(budget.out.find("(no answer)") != std::string::npos);

  const auto bad = cli("run --registry /nonexistent.json --script /nonexistent.jsonl " + quoted("q"));
  CHECK(bad.exit_code == 1);
  CHECK(bad.out.find("/nonexistent.json") != std::string::npos);

  CHECK(cli("run" + common + "--answer-mode sloppy q").exit_code != 0);
}

TEST_CASE("cli: bench, trace show and tools validate") {
  testing::TempDir dir;
  const auto bench = cli("bench --config " + kBenchConfig + " --output-dir " + (dir / "out").string());
  CHECK(bench.exit_code == 0);
  CHECK(bench.out.find("majority@5") != std::string::npos);
  const auto report = json::parse(testing::read_file(dir / "out" / "report.json"));
  CHECK(report.at("metrics")[2].at("accuracy") == 0.9);

  const auto shown = cli("trace show " + (dir / "out" / "traces.jsonl").string() + " q02");
  CHECK(shown.exit_code == 0);
  CHECK(shown.out.find("=== q02 |") == 0);
  CHECK(shown.out.find("Turn 1") != std::string::npos);

  const auto valid = cli("tools validate " + kData + "/bench/registry.json");
  CHECK(valid.exit_code == 0);
  CHECK(valid.out.find("ok\n") != std::string::npos);

  auto reg = json::parse(testing::read_file(kData + "/bench/registry.json"));
  reg["tools"].push_back(reg["tools"][0]);
  testing::write_file(dir / "dup.json", reg.dump());
  const auto dup = cli("tools validate " + (dir / "dup.json").string());
  CHECK(dup.exit_code == 1);
  CHECK(dup.out.find("duplicate name") != std::string::npos);

  CHECK(cli("no-such-command").exit_code != 0);
}
