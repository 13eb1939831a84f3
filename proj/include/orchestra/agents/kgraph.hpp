#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "orchestra/agents/agent.hpp"
#include "orchestra/backend.hpp"

namespace orchestra::kgraph {

struct Triple {
  std::string subject;
  std::string relation;
  std::string object;
  std::set<std::size_t> provenance;  // reasoning-step indices

  bool operator==(const Triple&) const = default;
};

/// Lowercase, trimmed, inner whitespace collapsed to one space.
std::string normalize_concept(std::string_view s);

/// Parses "subject | relation | object" lines or a JSON array of
/// [s, r, o] / {"subject","relation","object"} items. Malformed entries and
/// entries with an empty concept are skipped.
std::vector<Triple> parse_triples(std::string_view reply);

/// Prompts `backend` to extract triples from one reasoning step.
std::vector<Triple> extract(std::string_view prose, Backend& backend);

std::string render(const std::vector<Triple>& triples);

/// Triple store for one trajectory. Writers are serialized; readers share.
class Graph {
 public:
  /// Stores normalized triples; a repeat adds `step` to the existing
  /// provenance. Returns the triples as stored.
  std::vector<Triple> add(const std::vector<Triple>& triples, std::size_t step);

  /// 1-hop neighbourhood of every concept whose tokens all occur in `query`.
  std::vector<Triple> local(std::string_view query) const;
  /// Top-k triples by count of distinct shared tokens; zero-overlap excluded.
  std::vector<Triple> global(std::string_view query, std::size_t k) const;

  std::vector<Triple> all() const;
  std::size_t size() const;

 private:
  using Key = std::tuple<std::string, std::string, std::string>;
  mutable std::shared_mutex mu_;
  std::map<Key, std::set<std::size_t>> triples_;
};

/// Extract and store in one step.
std::vector<Triple> ingest(Graph& graph, std::string_view prose, std::size_t step, Backend& backend);

/// Payload "local: <text>" or "global: <text>" (default local), or JSON
/// {"mode", "query", "k"}. observe() feeds every reasoning step through
/// extraction when auto_ingest is on. Settings: auto_ingest, k.
class KGraphAgent : public Agent {
 public:
  KGraphAgent(std::shared_ptr<Backend> backend, bool auto_ingest, std::size_t k)
      : backend_(std::move(backend)), auto_ingest_(auto_ingest), k_(k) {}

  std::string invoke(std::string_view payload, const InvocationContext& context) override;
  void observe(std::string_view prose, const InvocationContext& context) override;
  void end_trajectory(const std::string& trajectory_id) override;

  std::shared_ptr<Graph> graph(const std::string& trajectory_id);

 private:
  std::shared_ptr<Backend> backend_;
  bool auto_ingest_;
  std::size_t k_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Graph>> graphs_;
};

}  // namespace orchestra::kgraph
