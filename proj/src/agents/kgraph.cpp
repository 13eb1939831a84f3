#include "orchestra/agents/kgraph.hpp"

#include <algorithm>
#include <cctype>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "orchestra/error.hpp"
#include "orchestra/text.hpp"

namespace orchestra::kgraph {

using nlohmann::json;

std::string normalize_concept(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : text::trim(s)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

namespace {

std::optional<Triple> make_triple(std::string_view s, std::string_view r, std::string_view o) {
  Triple t{normalize_concept(s), normalize_concept(r), normalize_concept(o), {}};
  if (t.subject.empty() || t.relation.empty() || t.object.empty()) return std::nullopt;
  return t;
}

std::set<std::string> token_set(std::string_view s) {
  auto v = text::word_tokens(s);
  return {v.begin(), v.end()};
}

bool tokens_within(const std::string& concept_text, const std::set<std::string>& query) {
  const auto tokens = text::word_tokens(concept_text);
  if (tokens.empty()) return false;
  return std::all_of(tokens.begin(), tokens.end(), [&](const std::string& t) { return query.count(t) > 0; });
}

}  // namespace

std::vector<Triple> parse_triples(std::string_view reply) {
  std::vector<Triple> out;
  const auto body = text::trim(reply);
  if (!body.empty() && body.front() == '[') {
    try {
      const json j = json::parse(body);
      for (const auto& item : j) {
        std::optional<Triple> t;
        if (item.is_array() && item.size() == 3 && item[0].is_string() && item[1].is_string() && item[2].is_string()) {
          t = make_triple(item[0].get<std::string>(), item[1].get<std::string>(), item[2].get<std::string>());
        } else if (item.is_object()) {
          t = make_triple(item.value("subject", ""), item.value("relation", ""), item.value("object", ""));
        }
        if (t) out.push_back(std::move(*t));
      }
      return out;
    } catch (const json::exception&) {
      out.clear();  // fall through to the line format
    }
  }
  std::istringstream in{std::string(body)};
  std::string line;
  while (std::getline(in, line)) {
    auto l = text::trim(line);
    if (!l.empty() && (l.front() == '-' || l.front() == '*')) l = text::trim(l.substr(1));
    if (!l.empty() && l.front() == '(' && l.back() == ')') l = l.substr(1, l.size() - 2);
    const auto a = l.find('|');
    if (a == std::string_view::npos) continue;
    const auto b = l.find('|', a + 1);
    if (b == std::string_view::npos || l.find('|', b + 1) != std::string_view::npos) continue;
    if (auto t = make_triple(l.substr(0, a), l.substr(a + 1, b - a - 1), l.substr(b + 1))) out.push_back(std::move(*t));
  }
  return out;
}

std::vector<Triple> extract(std::string_view prose, Backend& backend) {
  GenerationRequest req;
  req.messages = {
      {Role::System,
       "Extract clinical knowledge from the text as triples, one per line, in the form "
       "subject | relation | object. Use short noun phrases for concepts. Reply with the triples only."},
      {Role::User, std::string(prose)},
  };
  req.temperature = 0.0;
  return parse_triples(backend.generate(req).text);
}

std::string render(const std::vector<Triple>& triples) {
  std::string out;
  for (const auto& t : triples) {
    if (!out.empty()) out += "\n";
    out += t.subject + " \xE2\x80\x94" + t.relation + "\xE2\x86\x92 " + t.object + " (step ";
    bool first = true;
    for (auto s : t.provenance) {
      out += (first ? "" : ", ") + std::to_string(s);
      first = false;
    }
    out += ")";
  }
  return out;
}

std::vector<Triple> Graph::add(const std::vector<Triple>& triples, std::size_t step) {
  std::unique_lock lock(mu_);
  std::vector<Triple> stored;
  for (const auto& t : triples) {
    auto n = make_triple(t.subject, t.relation, t.object);
    if (!n) continue;
    auto& prov = triples_[{n->subject, n->relation, n->object}];
    prov.insert(step);
    n->provenance = prov;
    stored.push_back(std::move(*n));
  }
  return stored;
}

std::vector<Triple> Graph::local(std::string_view query) const {
  const auto q = token_set(query);
  std::shared_lock lock(mu_);
  std::vector<Triple> out;
  for (const auto& [key, prov] : triples_) {
    const auto& [s, r, o] = key;
    if (tokens_within(s, q) || tokens_within(o, q)) out.push_back({s, r, o, prov});
  }
  return out;
}

std::vector<Triple> Graph::global(std::string_view query, std::size_t k) const {
  const auto q = token_set(query);
  std::shared_lock lock(mu_);
  std::vector<std::pair<std::size_t, Triple>> scored;
  for (const auto& [key, prov] : triples_) {
    const auto& [s, r, o] = key;
    std::set<std::string> tokens = token_set(s);
    for (const auto& t : token_set(r)) tokens.insert(t);
    for (const auto& t : token_set(o)) tokens.insert(t);
    std::size_t overlap = 0;
    for (const auto& t : tokens) overlap += q.count(t);
    if (overlap > 0) scored.push_back({overlap, Triple{s, r, o, prov}});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Triple> out;
  for (std::size_t i = 0; i < scored.size() && i < k; ++i) out.push_back(std::move(scored[i].second));
  return out;
}

std::vector<Triple> Graph::all() const {
  std::shared_lock lock(mu_);
  std::vector<Triple> out;
  for (const auto& [key, prov] : triples_) {
    const auto& [s, r, o] = key;
    out.push_back({s, r, o, prov});
  }
  return out;
}

std::size_t Graph::size() const {
  std::shared_lock lock(mu_);
  return triples_.size();
}

std::vector<Triple> ingest(Graph& graph, std::string_view prose, std::size_t step, Backend& backend) {
  return graph.add(extract(prose, backend), step);
}

std::shared_ptr<Graph> KGraphAgent::graph(const std::string& trajectory_id) {
  std::lock_guard lock(mu_);
  auto& g = graphs_[trajectory_id];
  if (!g) g = std::make_shared<Graph>();
  return g;
}

std::string KGraphAgent::invoke(std::string_view payload, const InvocationContext& context) {
  std::string mode = "local";
  std::string query;
  std::size_t k = k_;
  const auto body = text::trim(payload);
  if (!body.empty() && body.front() == '{') {
    try {
      const json j = json::parse(body);
      mode = j.value("mode", mode);
      query = j.value("query", "");
      k = j.value("k", k);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::SchemaViolation, std::string("bad knowledge-graph query: ") + e.what());
    }
  } else if (text::starts_with_icase(body, "global:")) {
    mode = "global";
    query = std::string(body.substr(7));
  } else if (text::starts_with_icase(body, "local:")) {
    query = std::string(body.substr(6));
  } else {
    query = std::string(body);
  }
  auto g = graph(context.trajectory_id);
  std::vector<Triple> hits;
  if (mode == "global") {
    hits = g->global(query, k);
  } else if (mode == "local") {
    hits = g->local(query);
  } else {
    throw Error(ErrorKind::SchemaViolation, "knowledge-graph mode must be local or global, got '" + mode + "'");
  }
  return hits.empty() ? "No matching knowledge." : render(hits);
}

void KGraphAgent::observe(std::string_view prose, const InvocationContext& context) {
  if (!auto_ingest_ || !backend_ || text::trim(prose).empty()) return;
  try {
    ingest(*graph(context.trajectory_id), prose, context.step, *backend_);
  } catch (const Error&) {
    // Memory is best-effort; a failed extraction never fails the trajectory.
  }
}

void KGraphAgent::end_trajectory(const std::string& trajectory_id) {
  std::lock_guard lock(mu_);
  graphs_.erase(trajectory_id);
}

}  // namespace orchestra::kgraph
