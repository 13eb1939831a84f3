#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "orchestra/agents/agent.hpp"
#include "orchestra/backend.hpp"
#include "orchestra/error.hpp"
#include "orchestra/eval.hpp"
#include "orchestra/registry.hpp"
#include "orchestra/trace.hpp"

namespace orchestra {

struct EngineBudget {
  std::size_t max_steps = 16;  // generation calls per trajectory
  double max_wall_seconds = 300.0;
  std::size_t max_consecutive_tool_failures = 3;

  /// Throws InvalidArgument unless every bound is positive.
  void validate() const;
};

enum class AnswerMode { Strict, Lenient };

struct EngineOptions {
  EngineBudget budget;
  AnswerMode answer_mode = AnswerMode::Strict;
  bool attach_prose = false;  // send the prose before a query along with its payload
  std::size_t max_result_context_bytes = 16384;
  std::size_t max_payload_bytes = markers::kDefaultMaxPayload;
  int max_tokens = 2048;
};

/// A trajectory that stopped without an answer. partial() holds everything
/// recorded up to the failure, with `error` set.
class TrajectoryError : public Error {
 public:
  TrajectoryError(ErrorKind kind, const std::string& message, TrajectoryRecord partial)
      : Error(kind, message), partial_(std::move(partial)) {}
  const TrajectoryRecord& partial() const { return partial_; }

 private:
  TrajectoryRecord partial_;
};

struct CaseResult {
  std::string question_id;
  std::vector<TrajectoryRecord> trajectories;
  std::vector<eval::Answer> normalized_answers;  // nullopt = Abstain
  std::map<std::string, double> vote_fractions;
  std::vector<std::optional<ErrorKind>> failures;  // why each unfinished trajectory stopped
};

/// Strategy variants for k trajectories: baseline, evidence-first,
/// imaging-first, guideline-first and a reversed tool order, cycling when
/// k > 5. Temperature 0.7, or 0 for a single trajectory.
std::vector<StrategyDescriptor> default_strategies(std::size_t k, const Registry& registry);

class Engine {
 public:
  Engine(Registry registry, std::shared_ptr<Backend> backend, std::shared_ptr<AgentSet> agents,
         EngineOptions options = {});

  /// Generate, scan, route, execute, integrate until an answer block.
  /// Throws TrajectoryError (BudgetExhausted, MissingAnswerBlock,
  /// MalformedGeneration or a backend failure).
  TrajectoryRecord run_trajectory(const Question& question, const StrategyDescriptor& strategy,
                                  std::int64_t seed) const;

  /// Runs k trajectories concurrently. A single strategy is replicated with
  /// seeds base_seed + i. Failed trajectories become Abstain. Records are
  /// appended to `store` in trajectory order.
  CaseResult run_case(const Question& question, std::size_t k, const std::vector<StrategyDescriptor>& strategies,
                      std::int64_t base_seed = 0, TraceStore* store = nullptr) const;

  const Registry& registry() const { return registry_; }
  const EngineOptions& options() const { return options_; }
  Backend& backend() const { return *backend_; }

 private:
  Registry registry_;
  std::shared_ptr<Backend> backend_;
  std::shared_ptr<AgentSet> agents_;
  EngineOptions options_;
};

}  // namespace orchestra
