// orchestra: command-line front end over liborchestra's C API.
//
//   orchestra run [options] (QUESTION | --question-file FILE)
//   orchestra bench [options] [DATASET]
//   orchestra trace show TRACE_FILE [QUESTION_ID]
//   orchestra serve [options] [--bind HOST:PORT]
//   orchestra tools validate REGISTRY [--probe]

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "orchestra/orchestra.h"

namespace {

using nlohmann::json;

struct CString {
  char* p = nullptr;
  ~CString() { orch_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct RuntimeHandle {
  orch_runtime* p = nullptr;
  ~RuntimeHandle() { orch_runtime_free(p); }
};

int report(orch_status status, const std::string& context) {
  std::cerr << "orchestra: " << context << ": " << orch_status_name(status);
  if (*orch_last_error()) std::cerr << ": " << orch_last_error();
  std::cerr << "\n";
  return 1;
}

// Flags shared by run, bench and serve. Unset flags stay out of the layer so
// the environment and the config file can supply them.
struct CommonFlags {
  std::string config;
  std::optional<std::string> registry, script, base_url, model, strategy_file, output_dir, answer_mode;
  std::optional<std::size_t> k, max_steps, max_tool_failures, workers;
  std::optional<double> max_wall_seconds;
  std::optional<std::int64_t> seed;
  bool attach_prose = false;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON config file (overrides flags)");
    app->add_option("--registry", registry, "Tool registry JSON");
    app->add_option("--script", script, "Scripted backend JSONL");
    app->add_option("--base-url", base_url, "Chat-completion endpoint base URL");
    app->add_option("--model", model, "Model name for the HTTP backend");
    app->add_option("-k,--k", k, "Trajectories per question");
    app->add_option("--strategy-file", strategy_file, "Strategy descriptors JSON");
    app->add_option("--output-dir", output_dir, "Directory for traces and reports");
    app->add_option("--seed", seed, "Base seed");
    app->add_option("--max-steps", max_steps, "Generation budget per trajectory");
    app->add_option("--max-wall-seconds", max_wall_seconds, "Wall-clock budget per trajectory");
    app->add_option("--max-tool-failures", max_tool_failures, "Consecutive tool failures before stopping");
    app->add_option("--answer-mode", answer_mode, "strict or lenient")->check(CLI::IsMember({"strict", "lenient"}));
    app->add_flag("--attach-prose", attach_prose, "Send preceding reasoning along with tool payloads");
    app->add_option("--workers", workers, "Service worker threads");
  }

  json layer() const {
    json j = json::object();
    if (registry) j["registry"] = *registry;
    if (script) j["backend"]["script"] = *script;
    if (base_url) j["backend"]["base_url"] = *base_url;
    if (model) j["backend"]["model"] = *model;
    if (k) j["k"] = *k;
    if (strategy_file) j["strategy_file"] = *strategy_file;
    if (output_dir) j["output_dir"] = *output_dir;
    if (seed) j["seed"] = *seed;
    if (max_steps) j["budget"]["max_steps"] = *max_steps;
    if (max_wall_seconds) j["budget"]["max_wall_seconds"] = *max_wall_seconds;
    if (max_tool_failures) j["budget"]["max_consecutive_tool_failures"] = *max_tool_failures;
    if (answer_mode) j["answer_mode"] = *answer_mode;
    if (attach_prose) j["attach_prose"] = true;
    if (workers) j["workers"] = *workers;
    return j;
  }

  orch_status create(RuntimeHandle& rt) const {
    return orch_runtime_create(layer().dump().c_str(), config.empty() ? nullptr : config.c_str(), &rt.p);
  }
};

int cmd_run(const CommonFlags& flags, const std::string& question, const std::string& question_file,
            const std::string& labels) {
  json q;
  if (!question_file.empty()) {
    std::ifstream in(question_file);
    if (!in) {
      std::cerr << "orchestra: cannot open question file " << question_file << "\n";
      return 1;
    }
    try {
      q = json::parse(in);
    } catch (const json::parse_error&) {
      in.clear();
      in.seekg(0);
      std::stringstream buf;
      buf << in.rdbuf();
      q = {{"question", buf.str()}};
    }
  } else {
    q = {{"question", question}};
  }
  if (!labels.empty()) {
    std::vector<std::string> set;
    std::stringstream ss(labels);
    for (std::string item; std::getline(ss, item, ',');) {
      if (!item.empty()) set.push_back(item);
    }
    q["label_set"] = set;
  }

  RuntimeHandle rt;
  if (auto st = flags.create(rt); st != ORCH_OK) return report(st, "configuration");
  CString summary;
  int exit_code = 0;
  if (auto st = orch_run_case(rt.p, q.dump().c_str(), &summary.p, &exit_code); st != ORCH_OK) {
    return report(st, "run");
  }
  const json s = json::parse(summary.str());
  const auto& answer = s.at("answer");
  std::cout << (answer.is_null() ? std::string("(no answer)") : answer.get<std::string>()) << "\n";
  for (const auto& t : s.at("trajectories")) {
    if (!t.at("error").is_null()) std::cerr << t.at("strategy").get<std::string>() << ": " << t.at("error").get<std::string>() << "\n";
  }
  return exit_code;
}

int cmd_bench(const CommonFlags& flags, const std::string& dataset) {
  RuntimeHandle rt;
  if (auto st = flags.create(rt); st != ORCH_OK) return report(st, "configuration");
  CString report_json, table;
  if (auto st = orch_bench(rt.p, dataset.empty() ? nullptr : dataset.c_str(), &report_json.p, &table.p);
      st != ORCH_OK) {
    return report(st, "bench");
  }
  std::cout << table.str();
  return 0;
}

int cmd_trace_show(const std::string& path, const std::string& question_id) {
  CString text;
  if (auto st = orch_trace_render(path.c_str(), question_id.empty() ? nullptr : question_id.c_str(), &text.p);
      st != ORCH_OK) {
    return report(st, path);
  }
  std::cout << text.str();
  return 0;
}

int cmd_tools_validate(const std::string& path, bool probe) {
  CString text;
  const auto st = orch_tools_validate(path.c_str(), probe ? 1 : 0, &text.p);
  if (st != ORCH_OK) {
    std::cerr << text.str();
    return report(st, path);
  }
  std::cout << text.str() << "ok\n";
  return 0;
}

int cmd_serve(const CommonFlags& flags, const std::string& bind) {
  std::string host = "127.0.0.1";
  int port = 8080;
  if (!bind.empty()) {
    const auto colon = bind.rfind(':');
    try {
      if (colon == std::string::npos) {
        port = std::stoi(bind);
      } else {
        host = bind.substr(0, colon);
        port = std::stoi(bind.substr(colon + 1));
      }
    } catch (const std::exception&) {
      std::cerr << "orchestra: bad bind address '" << bind << "'\n";
      return 1;
    }
  }

  // Block the signals before any thread exists so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  RuntimeHandle rt;
  if (auto st = flags.create(rt); st != ORCH_OK) return report(st, "configuration");
  orch_service* svc = nullptr;
  const auto st = orch_service_start(rt.p, host.c_str(), port, &svc);
  rt.p = nullptr;  // the service owns it now
  if (st != ORCH_OK) return report(st, "serve");
  std::cerr << "orchestra: listening on http://" << host << ":" << orch_service_port(svc) << "\n";

  int sig = 0;
  sigwait(&signals, &sig);
  std::cerr << "orchestra: stopping\n";
  orch_service_stop(svc);
  orch_service_free(svc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent clinical reasoning orchestrator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", orch_version());
  std::string network = "allow";
  app.add_option("--network", network, "Outbound network policy")
      ->check(CLI::IsMember({"allow", "loopback", "deny"}));

  CommonFlags flags;

  auto* run = app.add_subcommand("run", "Answer one question");
  flags.add_to(run);
  std::string question, question_file, labels;
  run->add_option("question", question, "Question text");
  run->add_option("--question-file", question_file, "Question as JSON (or plain text)");
  run->add_option("--labels", labels, "Comma-separated label set");
  run->callback([&] {
    if (question.empty() == question_file.empty()) throw CLI::ValidationError("give a question or --question-file");
  });

  auto* bench = app.add_subcommand("bench", "Score a labelled dataset");
  flags.add_to(bench);
  std::string dataset;
  bench->add_option("dataset", dataset, "Dataset JSONL (defaults to the configured one)");

  auto* trace = app.add_subcommand("trace", "Inspect trace files");
  trace->require_subcommand(1);
  auto* show = trace->add_subcommand("show", "Render trajectories");
  std::string trace_path, trace_qid;
  show->add_option("trace_file", trace_path, "traces.jsonl")->required();
  show->add_option("question_id", trace_qid, "Only this question");

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  flags.add_to(serve);
  std::string bind;
  serve->add_option("--bind", bind, "HOST:PORT (default 127.0.0.1:8080)");

  auto* tools = app.add_subcommand("tools", "Tool registry utilities");
  tools->require_subcommand(1);
  auto* validate = tools->add_subcommand("validate", "Check a registry file");
  std::string registry_path;
  bool probe = false;
  validate->add_option("registry", registry_path, "Registry JSON")->required();
  validate->add_flag("--probe", probe, "Check that external endpoints answer");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  orch_set_network_policy(network == "allow" ? 0 : network == "loopback" ? 1 : 2);

  if (*run) return cmd_run(flags, question, question_file, labels);
  if (*bench) return cmd_bench(flags, dataset);
  if (*show) return cmd_trace_show(trace_path, trace_qid);
  if (*serve) return cmd_serve(flags, bind);
  if (*validate) return cmd_tools_validate(registry_path, probe);
  return 1;
}
