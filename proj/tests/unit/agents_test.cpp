#include <doctest.h>

#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <thread>

#include "helpers.hpp"
#include "local_server.hpp"
#include "orchestra/agents/agent.hpp"
#include "orchestra/agents/external.hpp"
#include "orchestra/agents/kgraph.hpp"
#include "orchestra/agents/retrieval.hpp"
#include "orchestra/agents/websearch.hpp"
#include "orchestra/error.hpp"

using namespace orchestra;
using testing::json;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;
}

// ---- retrieval oracle ----------------------------------------------------

std::vector<std::string> tokens_of(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s + " ") {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  return out;
}

// BM25 over whole documents; statistics over the documents sharing a token
// with the query.
std::map<std::string, double> oracle_bm25(const std::map<std::string, std::string>& docs, const std::string& query) {
  const auto q = tokens_of(query);
  const std::set<std::string> qs(q.begin(), q.end());
  std::map<std::string, std::vector<std::string>> cand;
  for (const auto& [id, text] : docs) {
    auto t = tokens_of(text);
    if (std::any_of(t.begin(), t.end(), [&](const std::string& w) { return qs.count(w) > 0; })) cand[id] = t;
  }
  double avg = 0;
  for (const auto& [id, t] : cand) avg += t.size();
  avg /= cand.size();
  std::map<std::string, double> out;
  for (const auto& [id, t] : cand) {
    double score = 0;
    for (const auto& term : qs) {
      double df = 0;
      for (const auto& [_, other] : cand) df += std::count(other.begin(), other.end(), term) > 0;
      const double tf = std::count(t.begin(), t.end(), term);
      if (tf == 0) continue;
      const double idf = std::log((cand.size() - df + 0.5) / (df + 0.5) + 1);
      score += idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * t.size() / avg));
    }
    out[id] = score;
  }
  return out;
}

}  // namespace

TEST_CASE("fixture agents answer canned payloads and fail on request") {
  auto agent = FixtureAgent::from_json(
      {{"responses", {{"study 1", "effusion"}, {"broken", {{"error", "scanner offline"}}}}}});
  CHECK(agent->invoke("  study 1\n", {}) == "effusion");
  try {
    agent->invoke("broken", {});
    FAIL("expected ExecutionFailed");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ExecutionFailed);
    CHECK(std::string(e.what()).find("scanner offline") != std::string::npos);
  }
  CHECK(kind_of([&] { agent->invoke("other", {}); }) == ErrorKind::ExecutionFailed);

  auto with_fallback = FixtureAgent::from_json({{"fallback", "nothing found"}});
  CHECK(with_fallback->invoke("anything", {}) == "nothing found");
  CHECK_THROWS_AS(FixtureAgent::from_json({{"responses", {{"a", 3}}}}), Error);
}

TEST_CASE("agent sets bind every tool and reject unknown agent ids") {
  const auto registry = testing::registry_of({testing::tool_json("a", "echo"), testing::tool_json("b", "fixture")});
  const auto set = AgentSet::build(registry, nullptr);
  REQUIRE(set->resolve("a"));
  CHECK(set->resolve("a")->invoke("ping", {}) == "ping");
  CHECK(set->resolve("b"));
  CHECK_FALSE(set->resolve("c"));

  const auto bad = testing::registry_of({testing::tool_json("a", "telepathy")});
  CHECK(kind_of([&] { AgentSet::build(bad, nullptr); }) == ErrorKind::SchemaViolation);
  const auto no_db = testing::registry_of({testing::tool_json("sql", "text2sql")});
  CHECK(kind_of([&] { AgentSet::build(no_db, nullptr); }) == ErrorKind::SchemaViolation);
}

// ---- retrieval ------------------------------------------------------------

TEST_CASE("chunking windows overlap by the configured amount") {
  std::string text;
  for (int i = 0; i < 25; ++i) text += "w" + std::to_string(i) + " ";
  const auto chunks = retrieval::chunk_text(text, {10, 3});
  REQUIRE(chunks.size() == 4);
  CHECK(chunks[0].rfind("w0 ", 0) == 0);
  CHECK(chunks[1].rfind("w7 ", 0) == 0);
  CHECK(chunks[2] == "w14 w15 w16 w17 w18 w19 w20 w21 w22 w23");
  CHECK(chunks[3] == "w21 w22 w23 w24");
  CHECK_THROWS_AS(retrieval::chunk_text(text, {5, 5}), Error);
}

TEST_CASE("front matter supplies the document date") {
  std::string date;
  CHECK(retrieval::strip_front_matter("---\ntitle: x\ndate: 2018-04-01\n---\nBody text", date) == "Body text");
  CHECK(date == "2018-04-01");
  date.clear();
  CHECK(retrieval::strip_front_matter("date: 2011-01-01\nBody", date) == "Body");
  CHECK(date == "2011-01-01");
}

TEST_CASE("retrieval ranks self-matches first and drops non-matches") {
  retrieval::Corpus corpus;
  corpus.add({"nia-aa", "2018-04-01", "amyloid tau neurodegeneration biomarker framework"});
  corpus.add({"mci", "2011-05-01", "mild cognitive impairment core clinical criteria"});
  corpus.add({"vascular", "2011-07-01", "vascular contributions to cognitive impairment"});

  const auto hits = corpus.search("mild cognitive impairment core clinical criteria");
  REQUIRE_FALSE(hits.empty());
  CHECK(hits[0].doc_id == "mci");
  CHECK(corpus.search("zebrafish telescope").empty());
  CHECK(kind_of([] { retrieval::Corpus().search("x"); }) == ErrorKind::EmptyCorpus);
}

TEST_CASE("equal scores go to the newer document") {
  retrieval::Corpus corpus;
  corpus.add({"old", "2011-01-01", "hippocampal atrophy"});
  corpus.add({"new", "2018-01-01", "hippocampal atrophy"});
  const auto hits = corpus.search("atrophy");
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].score == hits[1].score);
  CHECK(hits[0].doc_id == "new");
}

TEST_CASE("property: BM25 scores match the oracle and ignore irrelevant documents") {
  auto& g = testing::rng();
  const std::vector<std::string> vocab = {"amyloid", "tau", "atrophy", "memory", "mmse", "effusion",
                                          "lung", "pleural", "cortex", "gait", "speech", "sleep"};
  for (int round = 0; round < 50; ++round) {
    std::map<std::string, std::string> docs;
    retrieval::Corpus corpus({1000, 10});
    const int n = 2 + static_cast<int>(g() % 8);
    for (int d = 0; d < n; ++d) {
      std::string text;
      for (std::size_t w = 0, len = 3 + g() % 20; w < len; ++w) text += vocab[g() % vocab.size()] + " ";
      const auto id = "doc" + std::to_string(d);
      docs[id] = text;
      corpus.add({id, "2020-01-0" + std::to_string(1 + d % 9), text});
    }
    const std::string query = vocab[g() % vocab.size()] + " " + vocab[g() % vocab.size()];
    const auto oracle = oracle_bm25(docs, query);
    const auto hits = corpus.search(query, 100);
    CHECK(hits.size() == oracle.size());
    for (const auto& h : hits) CHECK(std::abs(h.score - oracle.at(h.doc_id)) <= 1e-12);

    corpus.add({"noise", "2030-01-01", "unrelated zebra words only"});
    const auto again = corpus.search(query, 100);
    REQUIRE(again.size() == hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
      CHECK(again[i].doc_id == hits[i].doc_id);
      CHECK(again[i].score == hits[i].score);
    }
  }
}

TEST_CASE("retrieval agents read a corpus directory") {
  testing::TempDir dir;
  testing::write_file(dir / "corpus" / "a.md", "---\ndate: 2018-01-01\n---\nAmyloid PET supports AD.");
  testing::write_file(dir / "corpus" / "sub" / "b.txt", "date: 2012-01-01\nGait speed in MCI.");
  testing::write_file(dir / "corpus" / "ignored.csv", "amyloid,amyloid");
  auto doc = testing::registry_json({testing::tool_json("guidelines", "retrieval", {{"corpus_dir", "corpus"}, {"k", 1}})});
  testing::write_file(dir / "registry.json", doc.dump());
  const auto set = AgentSet::build(Registry::load_file(dir / "registry.json"), nullptr);
  const auto out = set->resolve("guidelines")->invoke("amyloid", {});
  CHECK(out.rfind("[1] a.md #0 (2018-01-01, score ", 0) == 0);
  CHECK(out.find("b.txt") == std::string::npos);
  CHECK(set->resolve("guidelines")->invoke("gait", {}).find("sub/b.txt") != std::string::npos);
  CHECK(set->resolve("guidelines")->invoke("xyzzy", {}) == "No matching guideline sections.");
}

// ---- web search -----------------------------------------------------------

TEST_CASE("the best window contains a verbatim snippet") {
  std::string page;
  for (int i = 0; i < 400; ++i) page += "noise" + std::to_string(i) + " ";
  const std::string snippet = "Lecanemab slowed decline on the CDR-SB by 27 percent";
  page += snippet + " ";
  for (int i = 0; i < 400; ++i) page += "filler" + std::to_string(i) + " ";
  const auto window = websearch::best_window(page, snippet, 256, 2048);
  CHECK(window.find(snippet) != std::string::npos);
  CHECK(window.size() <= 2048);
  CHECK(websearch::best_window(page, snippet, 256, 100).size() <= 100);
  CHECK(websearch::best_window(page, "unrelated", 256, 2048).empty());
}

TEST_CASE("web search degrades per hit and serializes to JSON") {
  auto fx = std::make_shared<websearch::Fixture>(websearch::Fixture::parse(json::parse(R"({
    "queries": {
      "lecanemab": [
        {"title": "Trial", "url": "https://a.test/1", "date": "2023-01-05", "snippet": "slowed decline"},
        {"title": "Gone", "url": "https://a.test/2", "date": "2023-01-06", "snippet": "missing page"},
        {"title": "Slow", "url": "https://a.test/3", "date": "2023-01-07", "snippet": "slow page"}
      ],
      "nothing": []
    },
    "pages": {"https://a.test/1": "Results: lecanemab slowed decline modestly.", "https://a.test/3": null}
  })")));
  websearch::WebSearchAgent agent(std::make_shared<websearch::FixtureProvider>(fx),
                                  std::make_shared<websearch::FixtureFetcher>(fx), {});
  const auto out = json::parse(agent.invoke("lecanemab", {}));
  REQUIRE(out.size() == 3);
  CHECK(out[0]["extracted_context"].get<std::string>().find("slowed decline") != std::string::npos);
  CHECK(out[1]["extracted_context"].is_null());
  CHECK(out[2]["extracted_context"].is_null());
  CHECK(out[1]["snippet"] == "missing page");
  CHECK(json::parse(agent.invoke("nothing", {})).empty());

  websearch::FixtureFetcher fetcher(fx);
  CHECK(kind_of([&] { fetcher.fetch("https://a.test/3", 5); }) == ErrorKind::FetchTimeout);

  auto down = std::make_shared<websearch::Fixture>();
  down->unavailable = true;
  websearch::WebSearchAgent offline(std::make_shared<websearch::FixtureProvider>(down),
                                    std::make_shared<websearch::FixtureFetcher>(down), {});
  CHECK(kind_of([&] { offline.invoke("x", {}); }) == ErrorKind::ProviderUnavailable);
}

TEST_CASE("HTML reduces to visible text") {
  const auto t = websearch::html_to_text(
      "<html><head><style>p{}</style><script>var x=1;</script></head><body><p>Hello &amp; welcome</p></body></html>");
  CHECK(t.find("Hello & welcome") != std::string::npos);
  CHECK(t.find("var x") == std::string::npos);
}

// ---- knowledge graph ------------------------------------------------------

TEST_CASE("triples parse from lines and JSON") {
  const auto lines = kgraph::parse_triples("- Dyspnea | suggests | Heart_Failure\nnot a triple\n( a | b | c )\n |x| y");
  REQUIRE(lines.size() == 2);
  CHECK(lines[0].subject == "dyspnea");
  CHECK(lines[0].object == "heart_failure");
  const auto js = kgraph::parse_triples(R"([["MMSE", "declined to", "21"], {"subject": "AD", "relation": "causes", "object": "atrophy"}, [1, 2, 3]])");
  CHECK(js.size() == 2);
  CHECK(kgraph::normalize_concept("  Pleural   Effusion ") == "pleural effusion");
}

TEST_CASE("knowledge graph stores, deduplicates and queries") {
  testing::FunctionBackend extractor([](const GenerationRequest& req) -> std::string {
    if (req.messages.back().content.find("breathless") != std::string::npos) return "dyspnea | suggests | heart_failure";
    return "amyloid | accumulates in | cortex";
  });
  kgraph::Graph graph;
  const auto stored = kgraph::ingest(graph, "The patient is breathless.", 0, extractor);
  REQUIRE(stored.size() == 1);
  kgraph::ingest(graph, "The patient is breathless.", 2, extractor);
  kgraph::ingest(graph, "Amyloid burden is high.", 3, extractor);
  CHECK(graph.size() == 2);

  const auto local = graph.local("dyspnea");
  REQUIRE(local.size() == 1);
  CHECK(local[0].provenance == std::set<std::size_t>{0, 2});
  CHECK(kgraph::render(local) == "dyspnea \xE2\x80\x94suggests\xE2\x86\x92 heart_failure (step 0, 2)");

  CHECK(graph.global("telescope nebula", 5).empty());
  CHECK(graph.global("cortex amyloid", 1)[0].subject == "amyloid");
}

TEST_CASE("property: repeated ingestion of the same prose is idempotent") {
  testing::FunctionBackend extractor([](const GenerationRequest&) { return "a | r | b\nc | r | d"; });
  kgraph::Graph graph;
  kgraph::ingest(graph, "same text", 1, extractor);
  const auto once = graph.all();
  kgraph::ingest(graph, "same text", 1, extractor);
  CHECK(graph.all() == once);
}

TEST_CASE("the knowledge-graph agent keeps one graph per trajectory") {
  auto extractor = std::make_shared<testing::FunctionBackend>(
      [](const GenerationRequest&) { return "dyspnea | suggests | heart_failure"; });
  kgraph::KGraphAgent agent(extractor, true, 5);
  agent.observe("breathless on exertion", {"t1", 0, ""});
  CHECK(agent.invoke("dyspnea", {"t1", 1, ""}).find("heart_failure") != std::string::npos);
  CHECK(agent.invoke("global: suggests", {"t1", 1, ""}).find("dyspnea") != std::string::npos);
  CHECK(agent.invoke(R"({"mode": "global", "query": "dyspnea", "k": 1})", {"t1", 1, ""}).find("dyspnea") !=
        std::string::npos);
  CHECK(agent.invoke("dyspnea", {"t2", 1, ""}) == "No matching knowledge.");
  CHECK(kind_of([&] { agent.invoke(R"({"mode": "sideways"})", {"t1", 1, ""}); }) == ErrorKind::SchemaViolation);
  agent.end_trajectory("t1");
  CHECK(agent.invoke("dyspnea", {"t1", 2, ""}) == "No matching knowledge.");
}

TEST_CASE("concurrent readers and writers on one graph") {
  kgraph::Graph graph;
  std::vector<std::thread> threads;
  for (int w = 0; w < 4; ++w) {
    threads.emplace_back([&, w] {
      for (int i = 0; i < 100; ++i) {
        graph.add({{"s" + std::to_string(i % 10), "r", "o" + std::to_string(w), {}}}, static_cast<std::size_t>(i));
        graph.local("s1");
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(graph.size() == 40);
}

// ---- external tools -------------------------------------------------------

TEST_CASE("external tools speak POST {query} -> {result}") {
  testing::LocalServer local;
  local.server().Post("/echo", [](const httplib::Request& req, httplib::Response& res) {
    res.set_content(json({{"result", json::parse(req.body).at("query")}}).dump(), "application/json");
  });
  local.server().Post("/structured", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"result": {"effusion": true}})", "application/json");
  });
  local.server().Post("/fail", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("model crashed", "text/plain");
  });
  local.server().Post("/slow", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content(R"({"result": "late"})", "application/json");
  });
  local.server().Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("<html>", "text/html");
  });

  CHECK(ExternalAgent(local.url() + "/echo", 2000).invoke("50414267", {}) == "50414267");
  CHECK(ExternalAgent(local.url() + "/structured", 2000).invoke("q", {}) == R"({"effusion":true})");
  try {
    ExternalAgent(local.url() + "/fail", 2000).invoke("q", {});
    FAIL("expected RemoteError");
  } catch (const RemoteError& e) {
    CHECK(e.status() == 500);
    CHECK(e.body() == "model crashed");
  }
  CHECK(kind_of([&] { ExternalAgent(local.url() + "/slow", 100).invoke("q", {}); }) == ErrorKind::Timeout);
  CHECK(kind_of([&] { ExternalAgent(local.url() + "/garbage", 2000).invoke("q", {}); }) == ErrorKind::ProtocolError);
  CHECK(kind_of([] { ExternalAgent("ftp://x", 100); }) == ErrorKind::BadEndpoint);
}
