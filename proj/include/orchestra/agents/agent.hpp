#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "orchestra/registry.hpp"

namespace orchestra {

class Backend;

/// Where a tool call comes from. Agents that keep per-trajectory state (the
/// knowledge graph) key it by trajectory_id.
struct InvocationContext {
  std::string trajectory_id;
  std::size_t step = 0;
  std::string preceding_prose;
};

/// A tool implementation. invoke() returns the evidence text or throws
/// orchestra::Error; the engine turns errors into error result blocks.
/// Implementations must tolerate concurrent calls from distinct trajectories.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string invoke(std::string_view payload, const InvocationContext& context) = 0;
  /// Sees every reasoning segment the model produces.
  virtual void observe(std::string_view /*prose*/, const InvocationContext& /*context*/) {}
  virtual void end_trajectory(const std::string& /*trajectory_id*/) {}
};

/// Tool name -> agent, built from a registry. Builtin descriptors resolve by
/// agent_id; external descriptors get an HTTP adapter.
class AgentSet {
 public:
  AgentSet() = default;

  /// `aux_backend` serves agents that prompt a model themselves (Text2SQL,
  /// knowledge-graph extraction). Throws SchemaViolation for unknown agent ids
  /// or bad agent settings.
  static std::shared_ptr<AgentSet> build(const Registry& registry, std::shared_ptr<Backend> aux_backend);

  void bind(const std::string& tool, std::shared_ptr<Agent> agent);
  Agent* resolve(std::string_view tool) const;

  void observe_all(std::string_view prose, const InvocationContext& context) const;
  void end_trajectory(const std::string& trajectory_id) const;

 private:
  std::map<std::string, std::shared_ptr<Agent>, std::less<>> agents_;
};

struct FixtureResponse {
  std::string text;
  bool error = false;  // invoke() throws ExecutionFailed with `text`
};

/// Canned payload -> result responses; the stub used by offline benchmarks.
/// Payloads match after trimming. Settings: responses {payload: text |
/// {"error": text}}, fallback.
class FixtureAgent : public Agent {
 public:
  FixtureAgent(std::map<std::string, FixtureResponse> responses, std::optional<FixtureResponse> fallback)
      : responses_(std::move(responses)), fallback_(std::move(fallback)) {}

  static std::shared_ptr<FixtureAgent> from_json(const nlohmann::json& settings);

  std::string invoke(std::string_view payload, const InvocationContext& context) override;

 private:
  std::map<std::string, FixtureResponse> responses_;
  std::optional<FixtureResponse> fallback_;
};

class EchoAgent : public Agent {
 public:
  std::string invoke(std::string_view payload, const InvocationContext&) override { return std::string(payload); }
};

}  // namespace orchestra
