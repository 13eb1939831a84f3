#include "orchestra/service.hpp"

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>

#include "orchestra/text.hpp"

namespace orchestra {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";
constexpr std::size_t kMaxK = 64;

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::optional<json> read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return json::parse(in);
  } catch (const json::parse_error&) {
    return std::nullopt;
  }
}

}  // namespace

struct Service::Impl {
  std::unique_ptr<Runtime> runtime;
  ServiceOptions options;
  std::filesystem::path case_dir;
  std::filesystem::path trace_dir;

  httplib::Server server;
  std::thread listener;
  int bound_port = -1;

  std::mutex mu;
  std::condition_variable cv;
  std::condition_variable stopped_cv;
  std::deque<std::string> queue;
  bool stopping = false;
  bool stopped = false;
  std::vector<std::thread> workers;
  std::atomic<std::uint64_t> counter{0};
  std::mutex file_mu;  // serializes case-file rewrites

  std::filesystem::path case_path(const std::string& id) const { return case_dir / (id + ".json"); }
  std::filesystem::path trace_path(const std::string& id) const { return trace_dir / (id + ".jsonl"); }

  void update_case(const std::string& id, const std::function<void(json&)>& edit) {
    std::lock_guard lock(file_mu);
    auto doc = read_json(case_path(id));
    if (!doc) return;
    edit(*doc);
    write_atomic(case_path(id), doc->dump(2) + "\n");
  }

  void worker_loop() {
    for (;;) {
      std::string id;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return stopping || !queue.empty(); });
        if (stopping) return;
        id = queue.front();
        queue.pop_front();
      }
      update_case(id, [](json& d) { d["status"] = "running"; });
      try {
        const auto doc = read_json(case_path(id));
        if (!doc) throw Error(ErrorKind::Io, "case file vanished");
        const Question q = eval::parse_question(doc->at("question"));
        TraceStore store(trace_path(id));
        runtime->run_case(q, doc->at("k").get<std::size_t>(), &store);
        update_case(id, [](json& d) { d["status"] = "done"; });
      } catch (const std::exception& e) {
        const std::string msg = e.what();
        update_case(id, [&](json& d) {
          d["status"] = "failed";
          d["error"] = msg;
        });
      }
    }
  }

  void post_case(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      return reply(res, 400, {{"error", std::string("body is not JSON: ") + e.what()}});
    }
    if (!body.is_object() || !body.contains("question") || !body["question"].is_string()) {
      return reply(res, 400, {{"error", "body needs a \"question\" string"}});
    }
    std::size_t k = runtime->config().k;
    if (body.contains("k")) {
      if (!body["k"].is_number_unsigned() || body["k"].get<std::size_t>() == 0 || body["k"].get<std::size_t>() > kMaxK) {
        return reply(res, 400, {{"error", "k must be an integer in 1.." + std::to_string(kMaxK)}});
      }
      k = body["k"].get<std::size_t>();
    }
    const std::string case_id =
        "case-" + std::to_string(text::now_utc_ms()) + "-" + std::to_string(counter.fetch_add(1));
    json question = {{"id", body.value("id", case_id)}, {"question", body["question"]}};
    for (const char* key : {"label_set", "aliases", "gold", "attachments"}) {
      if (body.contains(key)) question[key] = body[key];
    }
    try {
      eval::parse_question(question);
      runtime->strategies(k);
    } catch (const Error& e) {
      return reply(res, 400, {{"error", e.what()}});
    }
    if (!runtime->engine().backend().healthy()) {
      return reply(res, 503, {{"error", "model backend is unreachable"}});
    }
    {
      std::lock_guard lock(mu);
      if (queue.size() >= runtime->config().queue_capacity) {
        return reply(res, 503, {{"error", "case queue is full"}});
      }
      {
        std::lock_guard flock(file_mu);
        write_atomic(case_path(case_id),
                     json{{"case_id", case_id}, {"status", "queued"}, {"k", k}, {"question", question}}.dump(2) + "\n");
      }
      queue.push_back(case_id);
    }
    cv.notify_one();
    reply(res, 202, {{"case_id", case_id}});
  }

  void get_case(const std::string& id, httplib::Response& res) {
    std::optional<json> doc;
    {
      std::lock_guard lock(file_mu);
      doc = read_json(case_path(id));
    }
    if (!doc) return reply(res, 404, {{"error", "unknown case " + id}});
    json out = {{"case_id", id}, {"status", doc->value("status", "unknown")}};
    if (doc->contains("error")) out["error"] = (*doc)["error"];
    if (out["status"] == "done") {
      try {
        const Question q = eval::parse_question(doc->at("question"));
        CaseResult r;
        r.question_id = q.id;
        r.trajectories = read_trace_file(trace_path(id));
        const auto labels = eval::LabelSet::of(q);
        for (const auto& t : r.trajectories) {
          r.normalized_answers.push_back(t.answer ? eval::normalize_answer(*t.answer, labels) : eval::Answer{});
        }
        r.vote_fractions = eval::vote_fractions(r.normalized_answers);
        out["result"] = case_summary(q, r);
      } catch (const std::exception& e) {
        return reply(res, 500, {{"error", std::string("cannot rebuild case from traces: ") + e.what()}});
      }
    }
    reply(res, 200, out);
  }

  void get_traces(const std::string& id, httplib::Response& res) {
    if (!std::filesystem::exists(case_path(id))) return reply(res, 404, {{"error", "unknown case " + id}});
    json arr = json::array();
    if (std::filesystem::exists(trace_path(id))) {
      try {
        for (const auto& t : read_trace_file(trace_path(id))) arr.push_back(json::parse(write_trace(t)));
      } catch (const Error& e) {
        return reply(res, 500, {{"error", e.what()}});
      }
    }
    reply(res, 200, arr);
  }

  void routes() {
    server.Post("/cases", [this](const httplib::Request& req, httplib::Response& res) { post_case(req, res); });
    server.Get(R"(/cases/([A-Za-z0-9_.\-]+))",
               [this](const httplib::Request& req, httplib::Response& res) { get_case(req.matches[1], res); });
    server.Get(R"(/traces/([A-Za-z0-9_.\-]+))",
               [this](const httplib::Request& req, httplib::Response& res) { get_traces(req.matches[1], res); });
    server.Get("/tools", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(render_context(runtime->registry()), "text/plain; charset=utf-8");
    });
    server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      const bool ok = runtime->engine().backend().healthy();
      reply(res, ok ? 200 : 503, {{"status", ok ? "ok" : "backend unreachable"}});
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) reply(res, res.status, {{"error", "HTTP " + std::to_string(res.status)}});
    });
  }
};

Service::Service(std::unique_ptr<Runtime> runtime, ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->runtime = std::move(runtime);
  impl_->options = std::move(options);
  const auto base = impl_->runtime->config().output_dir / "service";
  impl_->case_dir = base / "cases";
  impl_->trace_dir = base / "traces";
  std::filesystem::create_directories(impl_->case_dir);
  std::filesystem::create_directories(impl_->trace_dir);
  // httplib's default also sets SO_REUSEPORT, which would let a second
  // service silently share the port.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  impl_->routes();
}

Service::~Service() { stop(); }

void Service::start() {
  auto& s = *impl_;
  if (s.options.port == 0) {
    s.bound_port = s.server.bind_to_any_port(s.options.host);
  } else {
    s.bound_port = s.server.bind_to_port(s.options.host, s.options.port) ? s.options.port : -1;
  }
  if (s.bound_port <= 0) {
    throw Error(ErrorKind::Io, "cannot bind " + s.options.host + ":" + std::to_string(s.options.port));
  }
  std::size_t n = s.runtime->config().workers;
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t i = 0; i < n; ++i) s.workers.emplace_back([&s] { s.worker_loop(); });
  s.listener = std::thread([&s] { s.server.listen_after_bind(); });
  s.server.wait_until_ready();
}

int Service::port() const { return impl_->bound_port; }

void Service::wait() {
  std::unique_lock lock(impl_->mu);
  impl_->stopped_cv.wait(lock, [&] { return impl_->stopped; });
}

void Service::stop() {
  auto& s = *impl_;
  {
    std::lock_guard lock(s.mu);
    if (s.stopped) return;
    s.stopping = true;
  }
  s.server.stop();
  s.cv.notify_all();
  if (s.listener.joinable()) s.listener.join();
  for (auto& w : s.workers) {
    if (w.joinable()) w.join();
  }
  {
    std::lock_guard lock(s.mu);
    s.stopped = true;
  }
  s.stopped_cv.notify_all();
}

}  // namespace orchestra
