#include "orchestra/engine.hpp"

#include <atomic>
#include <chrono>
#include <future>

#include "orchestra/markers.hpp"
#include "orchestra/text.hpp"

namespace orchestra {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::string_view kEvidenceFirst =
    "Strategy: gather objective evidence first. Query patient records and measurements before forming any "
    "hypothesis, then consult other tools only to confirm or rule out.";
constexpr std::string_view kImagingFirst =
    "Strategy: start from imaging. Inspect the available scans and imaging findings first, then use records "
    "and literature to interpret them.";
constexpr std::string_view kGuidelineFirst =
    "Strategy: start from clinical guidelines. Retrieve the relevant diagnostic criteria first, then check "
    "each criterion against the patient's data.";

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Cuts at most `limit` bytes without splitting a UTF-8 sequence.
std::size_t utf8_cut(const std::string& s, std::size_t limit) {
  if (limit >= s.size()) return s.size();
  std::size_t cut = limit;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return cut;
}

std::atomic<std::uint64_t> g_trajectory_counter{0};

}  // namespace

void EngineBudget::validate() const {
  if (max_steps == 0) throw Error(ErrorKind::InvalidArgument, "max_steps must be positive");
  if (!(max_wall_seconds > 0.0)) throw Error(ErrorKind::InvalidArgument, "max_wall_seconds must be positive");
  if (max_consecutive_tool_failures == 0) {
    throw Error(ErrorKind::InvalidArgument, "max_consecutive_tool_failures must be positive");
  }
}

std::vector<StrategyDescriptor> default_strategies(std::size_t k, const Registry& registry) {
  std::vector<std::string> reversed;
  for (auto it = registry.tools().rbegin(); it != registry.tools().rend(); ++it) reversed.push_back(it->name);
  const double temperature = k <= 1 ? 0.0 : 0.7;
  const std::vector<StrategyDescriptor> base = {
      {"baseline", "", temperature, {}},
      {"evidence-first", std::string(kEvidenceFirst), temperature, {}},
      {"imaging-first", std::string(kImagingFirst), temperature, {}},
      {"guideline-first", std::string(kGuidelineFirst), temperature, {}},
      {"tool-priority", "", temperature, reversed},
  };
  std::vector<StrategyDescriptor> out;
  for (std::size_t i = 0; i < k; ++i) {
    auto s = base[i % base.size()];
    if (i >= base.size()) s.name += "#" + std::to_string(i / base.size());
    out.push_back(std::move(s));
  }
  return out;
}

Engine::Engine(Registry registry, std::shared_ptr<Backend> backend, std::shared_ptr<AgentSet> agents,
               EngineOptions options)
    : registry_(std::move(registry)),
      backend_(std::move(backend)),
      agents_(std::move(agents)),
      options_(std::move(options)) {
  if (!backend_) throw Error(ErrorKind::InvalidArgument, "engine needs a backend");
  if (!agents_) agents_ = std::make_shared<AgentSet>();
  options_.budget.validate();
}

TrajectoryRecord Engine::run_trajectory(const Question& question, const StrategyDescriptor& strategy,
                                        std::int64_t seed) const {
  const auto started = Clock::now();
  const auto& budget = options_.budget;

  TrajectoryRecord rec;
  rec.question_id = question.id;
  rec.question = question_message(question);
  rec.knowledge_context = render_context(registry_, {strategy.preamble, strategy.tool_priority_hint});
  rec.strategy = strategy;
  rec.seed = seed;
  rec.started_ms = text::now_utc_ms();

  const std::string trajectory_id =
      question.id + "/" + strategy.name + "/" + std::to_string(g_trajectory_counter.fetch_add(1));
  struct EndGuard {
    const AgentSet& agents;
    const std::string& id;
    ~EndGuard() { agents.end_trajectory(id); }
  } end_guard{*agents_, trajectory_id};

  auto fail = [&](ErrorKind kind, const std::string& message) {
    rec.wall_time_s = seconds_since(started);
    rec.error = std::string(to_string(kind)) + ": " + message;
    throw TrajectoryError(kind, message, rec);
  };

  std::vector<Message> conversation = {{Role::System, rec.knowledge_context}, {Role::User, rec.question}};
  const auto stops = registry_.stop_sequences();
  const markers::ScanOptions scan_options{options_.max_payload_bytes};
  std::size_t consecutive_failures = 0;

  for (;;) {
    if (rec.budget_used >= budget.max_steps) {
      fail(ErrorKind::BudgetExhausted, "steps: used all " + std::to_string(budget.max_steps) + " generations");
    }
    if (seconds_since(started) >= budget.max_wall_seconds) {
      fail(ErrorKind::BudgetExhausted, "wall_time: exceeded " + std::to_string(budget.max_wall_seconds) + " s");
    }

    rec.context_hashes.push_back(context_hash(conversation));
    GenerationRequest request;
    request.messages = conversation;
    request.temperature = strategy.temperature;
    request.seed = seed;
    request.stop_sequences = stops;
    request.max_tokens = options_.max_tokens;
    GenerationResult generation;
    try {
      generation = backend_->generate(request);
    } catch (const Error& e) {
      ++rec.budget_used;
      fail(e.kind(), e.what());
    }
    ++rec.budget_used;
    if (seconds_since(started) >= budget.max_wall_seconds) {
      fail(ErrorKind::BudgetExhausted, "wall_time: exceeded " + std::to_string(budget.max_wall_seconds) + " s");
    }

    std::string text = std::move(generation.text);
    auto event = markers::scan(text, scan_options);
    if (const auto* open = std::get_if<markers::Incomplete>(&event);
        open && generation.stop.kind == StopReason::Kind::StopSequence) {
      // The provider stripped the stop sequence; put the closing marker back.
      text += !generation.stop.matched.empty() ? generation.stop.matched
              : open->tool.empty()             ? std::string(markers::kAnswerEnd)
                                               : markers::end_query(open->tool);
      event = markers::scan(text, scan_options);
    }

    const InvocationContext context{trajectory_id, rec.steps.size(), {}};

    if (const auto* q = std::get_if<markers::ToolQuery>(&event)) {
      const std::string prose = text.substr(0, q->begin);
      agents_->observe_all(prose, {trajectory_id, rec.steps.size(), prose});

      ReasoningStep step;
      step.index = rec.steps.size();
      step.prose = prose;
      step.tool_call.emplace();
      step.tool_call->tool = q->tool;
      step.tool_call->query = q->payload;
      append_step(rec, std::move(step));
      auto& call = *rec.steps.back().tool_call;

      const ToolDescriptor* tool = registry_.find(q->tool);
      Agent* agent = tool ? agents_->resolve(tool->name) : nullptr;
      const auto call_start = Clock::now();
      if (!tool) {
        call.status = CallStatus::Error;
        call.error = "unknown tool '" + q->tool + "'";
      } else if (!agent) {
        call.status = CallStatus::Error;
        call.error = "no agent is bound to tool '" + tool->name + "'";
      } else {
        const std::string payload = options_.attach_prose && !text::trim(prose).empty()
                                        ? std::string(text::trim(prose)) + "\n\n" + q->payload
                                        : q->payload;
        try {
          call.result = agent->invoke(payload, {trajectory_id, rec.steps.size() - 1, prose});
          call.status = CallStatus::Ok;
        } catch (const Error& e) {
          call.status = CallStatus::Error;
          call.error = std::string(to_string(e.kind())) + ": " + e.what();
        } catch (const std::exception& e) {
          call.status = CallStatus::Error;
          call.error = e.what();
        }
      }
      call.latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - call_start).count();
      if (call.status == CallStatus::Ok && call.result->size() > options_.max_result_context_bytes) {
        call.context_bytes = utf8_cut(*call.result, options_.max_result_context_bytes);
      }

      conversation.push_back({Role::Assistant, assistant_turn(rec.steps.back())});
      conversation.push_back({Role::User, result_turn(call)});

      if (call.status == CallStatus::Error) {
        if (++consecutive_failures >= budget.max_consecutive_tool_failures) {
          fail(ErrorKind::BudgetExhausted,
               "tool_failures: " + std::to_string(consecutive_failures) + " consecutive tool failures");
        }
      } else {
        consecutive_failures = 0;
      }
      continue;
    }

    if (const auto* a = std::get_if<markers::AnswerBlock>(&event)) {
      const std::string prose = text.substr(0, a->begin);
      agents_->observe_all(prose, context);
      // The conclusion always gets its own step, so a finalized run never
      // ends on a tool call.
      append_step(rec, ReasoningStep{rec.steps.size(), prose, std::nullopt});
      finalize(rec, a->text);
      rec.wall_time_s = seconds_since(started);
      return rec;
    }

    if (const auto* p = std::get_if<markers::Prose>(&event)) {
      const auto conclusion = text::trim(p->text);
      if (options_.answer_mode == AnswerMode::Lenient && !conclusion.empty()) {
        agents_->observe_all(p->text, context);
        append_step(rec, ReasoningStep{rec.steps.size(), p->text, std::nullopt});
        finalize(rec, std::string(conclusion));
        rec.wall_time_s = seconds_since(started);
        return rec;
      }
      fail(ErrorKind::MissingAnswerBlock, "generation ended without a tool query or an answer block");
    }

    if (const auto* open = std::get_if<markers::Incomplete>(&event)) {
      fail(ErrorKind::MalformedGeneration,
           open->tool.empty() ? "answer block was never closed" : "query block for '" + open->tool + "' was never closed");
    }
    const auto& err = std::get<markers::ScanError>(event);
    fail(ErrorKind::MalformedGeneration, std::string(markers::to_string(err.kind)) + " at byte " +
                                             std::to_string(err.offset) + ": " + err.detail);
  }
}

CaseResult Engine::run_case(const Question& question, std::size_t k, const std::vector<StrategyDescriptor>& strategies,
                            std::int64_t base_seed, TraceStore* store) const {
  if (k == 0) throw Error(ErrorKind::InvalidArgument, "k must be positive");
  if (strategies.size() != 1 && strategies.size() != k) {
    throw Error(ErrorKind::InvalidArgument, "need 1 or " + std::to_string(k) + " strategies, got " +
                                                std::to_string(strategies.size()));
  }
  std::vector<StrategyDescriptor> plan;
  for (std::size_t i = 0; i < k; ++i) {
    StrategyDescriptor s = strategies.size() == 1 ? strategies[0] : strategies[i];
    if (strategies.size() == 1 && k > 1) s.name += "#" + std::to_string(i);
    plan.push_back(std::move(s));
  }
  const auto labels = eval::LabelSet::of(question);

  CaseResult result;
  result.question_id = question.id;
  result.trajectories.resize(k);
  result.failures.resize(k);
  std::vector<std::future<void>> running;
  for (std::size_t i = 0; i < k; ++i) {
    running.push_back(std::async(std::launch::async, [&, i] {
      const std::int64_t seed = base_seed + static_cast<std::int64_t>(i);
      try {
        result.trajectories[i] = run_trajectory(question, plan[i], seed);
      } catch (const TrajectoryError& e) {
        result.trajectories[i] = e.partial();
        result.failures[i] = e.kind();
      } catch (const Error& e) {
        TrajectoryRecord rec;
        rec.question_id = question.id;
        rec.question = question_message(question);
        rec.strategy = plan[i];
        rec.seed = seed;
        rec.error = std::string(to_string(e.kind())) + ": " + e.what();
        result.trajectories[i] = std::move(rec);
        result.failures[i] = e.kind();
      }
    }));
  }
  for (auto& f : running) f.get();

  for (const auto& t : result.trajectories) {
    result.normalized_answers.push_back(t.answer ? eval::normalize_answer(*t.answer, labels) : eval::Answer{});
    if (store) store->append(t);
  }
  result.vote_fractions = eval::vote_fractions(result.normalized_answers);
  return result;
}

}  // namespace orchestra
