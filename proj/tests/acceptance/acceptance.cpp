// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Everything runs offline: the network
// guard is set to Deny for criteria 1-9 and probed directly in 10.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "cxr_flow.hpp"
#include "helpers.hpp"
#include "orchestra/agents/longitudinal.hpp"
#include "orchestra/agents/text2sql.hpp"
#include "orchestra/engine.hpp"
#include "orchestra/error.hpp"
#include "orchestra/eval.hpp"
#include "orchestra/markers.hpp"
#include "orchestra/net.hpp"
#include "orchestra/runtime.hpp"
#include "toy_db.hpp"

using namespace orchestra;
using testing::json;

namespace {

// Tolerances and sizes, pinned.
constexpr double kMetricTol = 1e-12;
constexpr int kMetricInstances = 250;
constexpr std::size_t kMaxCases = 50;
constexpr std::size_t kMaxLabels = 5;
constexpr int kOrderingMultisets = 200;
constexpr int kFuzzBuffers = 10000;
constexpr std::size_t kFuzzMaxBytes = 64 * 1024;
constexpr int kRoundTrips = 1000;
constexpr double kAffineTol = 1e-12;
constexpr double kInvarianceTol = 1e-9;
constexpr int kLongitudinalSeries = 100;
constexpr std::size_t kMaxSteps = 16;
constexpr double kWallBudgetSeconds = 0.2;
constexpr double kWallFactor = 2.0;

struct Outcome {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail << what;
    } else if (!cond) {
      detail << "; " << what;
    }
  }
};

// Trajectories from criteria 3 and 4, replayed in 6.
std::vector<TrajectoryRecord> g_bench_trajectories;
std::vector<TrajectoryRecord> g_cxr_trajectories;

std::vector<std::string> label_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("L" + std::to_string(i));
  return out;
}

double pairwise_auc(const std::vector<double>& s, const std::vector<bool>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

bool near_opt(std::optional<double> a, std::optional<double> b, double tol) {
  if (a.has_value() != b.has_value()) return false;
  return !a || std::abs(*a - *b) <= tol * std::max(1.0, std::abs(*b));
}

// 1. Metric oracles.
void metric_oracles(Outcome& out) {
  using namespace eval;
  auto& g = testing::rng();
  int checked = 0;
  for (int round = 0; round < kMetricInstances; ++round) {
    const std::size_t n_labels = 2 + g() % (kMaxLabels - 1);
    const std::size_t n = 2 + g() % (kMaxCases - 1);
    const auto names = label_names(n_labels);
    std::vector<std::string> golds;
    std::vector<Answer> preds;
    for (std::size_t i = 0; i < n; ++i) {
      golds.push_back(names[g() % n_labels]);
      const auto roll = g() % (n_labels + 1);
      preds.push_back(roll == n_labels ? Answer{} : Answer{names[roll]});
    }
    const auto matrix = confusion(preds, golds, LabelSet::make(names));
    const auto macro = macro_metrics(matrix);
    const auto f1 = f1_suite(label_counts(matrix));

    double correct = 0, sen = 0, sen_n = 0, spe = 0, spe_n = 0;
    double f1_sum = 0, f1_w = 0, tp_all = 0, fp_all = 0, fn_all = 0;
    for (std::size_t i = 0; i < n; ++i) correct += preds[i] == golds[i];
    for (const auto& c : names) {
      double tp = 0, fp = 0, fn = 0, tn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool is_gold = golds[i] == c, is_pred = preds[i] && *preds[i] == c;
        tp += is_gold && is_pred;
        fn += is_gold && !is_pred;
        fp += !is_gold && is_pred;
        tn += !is_gold && !is_pred;
      }
      if (tp + fn > 0) sen += tp / (tp + fn), sen_n++;
      if (tn + fp > 0) spe += tn / (tn + fp), spe_n++;
      const double f = 2 * tp + fp + fn > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
      f1_sum += f;
      f1_w += f * (tp + fn);
      tp_all += tp, fp_all += fp, fn_all += fn;
    }
    const double micro_den = 2 * tp_all + fp_all + fn_all;
    out.require(near(macro.accuracy, correct / n, kMetricTol), "accuracy");
    out.require(sen_n == 0 ? !macro.sensitivity_macro : near_opt(macro.sensitivity_macro, sen / sen_n, kMetricTol),
                "macro sensitivity");
    out.require(spe_n == 0 ? !macro.specificity_macro : near_opt(macro.specificity_macro, spe / spe_n, kMetricTol),
                "macro specificity");
    out.require(near(f1.micro, micro_den > 0 ? 2 * tp_all / micro_den : 0.0, kMetricTol), "F1 micro");
    out.require(near(f1.macro, f1_sum / n_labels, kMetricTol), "F1 macro");
    out.require(near(f1.weighted, f1_w / n, kMetricTol), "F1 weighted");

    // AUC on a coarse score grid so ties are frequent.
    std::vector<double> scores(n);
    std::vector<bool> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(g() % 6) / 5.0;
      y[i] = g() % 2;
    }
    y[0] = true;
    y[1] = false;
    const auto a = auc(scores, y);
    out.require(a && near(*a, pairwise_auc(scores, y), kMetricTol), "AUC");
    ++checked;
  }
  out.detail << (out.ok ? "" : "; ") << checked << " instances, tolerance " << kMetricTol;
}

// 2. best@k >= majority@k and best@k monotone in k.
void strategy_ordering(Outcome& out) {
  using namespace eval;
  auto& g = testing::rng();
  const std::array<std::size_t, 3> ks{1, 3, 5};
  for (int round = 0; round < kOrderingMultisets; ++round) {
    const std::size_t n_labels = 2 + g() % 4, n_cases = 1 + g() % 30;
    const auto names = label_names(n_labels);
    std::array<double, 3> best{}, majority{};
    for (std::size_t c = 0; c < n_cases; ++c) {
      const auto gold = names[g() % n_labels];
      std::vector<Answer> answers;
      for (int i = 0; i < 5; ++i) {
        const auto roll = g() % (n_labels + 1);
        answers.push_back(roll == n_labels ? Answer{} : Answer{names[roll]});
      }
      for (std::size_t j = 0; j < ks.size(); ++j) {
        const std::span<const Answer> first(answers.data(), ks[j]);
        best[j] += best_at_k(first, gold);
        majority[j] += majority_at_k(first) == gold;
      }
    }
    for (std::size_t j = 0; j < ks.size(); ++j) {
      out.require(best[j] >= majority[j], "best@" + std::to_string(ks[j]) + " below majority@" + std::to_string(ks[j]));
      if (j > 0) out.require(best[j] >= best[j - 1], "best@k not monotone");
    }
  }
  out.detail << (out.ok ? "" : "; ") << kOrderingMultisets << " multiset collections, k in {1,3,5}";
}

std::unique_ptr<Runtime> bench_runtime(const std::filesystem::path& output) {
  const auto cfg = testing::data_dir() / "bench" / "config.json";
  return Runtime::create(
      resolve_config({}, {{"output_dir", output.string()}}, load_config_file(cfg), cfg.parent_path()));
}

/// Trace lines with the clock readings removed; everything else must repeat exactly.
std::string without_timing(const std::filesystem::path& path) {
  std::istringstream in(testing::read_file(path));
  std::string line, out;
  while (std::getline(in, line)) {
    auto record = json::parse(line);
    record.erase("started_ms");
    record.erase("wall_time_s");
    for (auto& step : record["steps"]) step.erase("latency_ms");
    out += record.dump() + "\n";
  }
  return out;
}

// 3. Scripted benchmark against the golden report, rerun byte-identical.
void scripted_benchmark(Outcome& out) {
  testing::TempDir dir;
  auto first = bench_runtime(dir / "a");
  const auto dataset = eval::load_dataset(first->config().dataset);
  const auto run = bench_command(*first, dataset);
  const auto golden = json::parse(testing::read_file(testing::data_dir() / "bench" / "expected_report.json"));
  out.require(dataset.size() == 20, "dataset size " + std::to_string(dataset.size()));
  out.require(testing::json_close(run.report, golden, kMetricTol), "report differs from expected_report.json");

  auto second = bench_runtime(dir / "b");
  bench_command(*second, dataset);
  out.require(testing::read_file(dir / "a" / "report.json") == testing::read_file(dir / "b" / "report.json"),
              "report.json differs between runs");
  out.require(without_timing(dir / "a" / "traces.jsonl") == without_timing(dir / "b" / "traces.jsonl"),
              "traces.jsonl differs between runs outside timing fields");
  g_bench_trajectories = read_trace_file(dir / "a" / "traces.jsonl");
  out.require(!g_bench_trajectories.empty(), "no trajectories recorded");
  out.detail << (out.ok ? "" : "; ") << dataset.size() << " questions, " << g_bench_trajectories.size()
             << " trajectories";
}

// 4. The worked chest X-ray flow.
void chest_xray_flow(Outcome& out) {
  using namespace testing::cxr;
  const auto engine = testing::cxr::engine();
  const auto result = engine->run_case(question(), 1, default_strategies(1, engine->registry()), 0, nullptr);
  out.require(result.trajectories.size() == 1, "expected one trajectory");
  if (result.trajectories.empty()) return;
  const auto& t = result.trajectories[0];
  g_cxr_trajectories = result.trajectories;

  const std::vector<std::string> tools{"retrieve", "image", "imageVQA"};
  out.require(t.steps.size() == 4, "expected three tool turns and a conclusion");
  for (std::size_t i = 0; i < tools.size() && i < t.steps.size(); ++i) {
    out.require(t.steps[i].tool_call && t.steps[i].tool_call->tool == tools[i], "turn " + std::to_string(i + 1));
  }
  out.require(t.answer == kConclusion, "conclusion text");

  // Marker bytes on the wire, spelled out literally.
  if (t.steps.size() == 4) {
    out.require(assistant_turn(t.steps[0]) ==
                    kRetrieveProse + "<|begin_retrieve_query|>\n" + kRetrieveQuery + "\n<|end_retrieve_query|>",
                "retrieve query bytes");
    out.require(result_turn(*t.steps[0].tool_call) ==
                    "<|begin_retrieve_result|>\n" + kRetrieveResult + "\n<|end_retrieve_result|>",
                "retrieve result bytes");
    out.require(assistant_turn(t.steps[2]).find("<|begin_imageVQA_query|>\n" + kVqaQuery + "\n<|end_imageVQA_query|>") !=
                    std::string::npos,
                "imageVQA query bytes");
  }

  const auto text = render_trace(result.trajectories);
  std::size_t at = 0;
  for (const std::string heading : {"Turn 1\n", "Turn 2\n", "Turn 3\n", "Conclusion\n"}) {
    const auto pos = text.find(heading, at);
    out.require(pos != std::string::npos, "rendered trace is missing '" + heading.substr(0, heading.size() - 1) + "' in order");
    if (pos != std::string::npos) at = pos;
  }
  out.detail << (out.ok ? "" : "; ") << "retrieve -> image -> imageVQA -> conclusion";
}

// 5. Scanner fuzz and render/scan round trips.
void parser_fuzz(Outcome& out) {
  namespace m = markers;
  auto& g = testing::rng();
  const std::vector<std::string> fragments{"<|begin_", "_query|>", "<|end_", "<|begin_answer|>", "<|end_answer|>",
                                           "retrieve", "|>", "<|", "\n"};
  const auto started = std::chrono::steady_clock::now();
  for (int i = 0; i < kFuzzBuffers; ++i) {
    // Mostly short buffers with marker fragments mixed in; one in 50 near the cap.
    const std::size_t size = i % 50 == 0 ? kFuzzMaxBytes - g() % 1024 : g() % 2048;
    std::string buf;
    buf.reserve(size);
    while (buf.size() < size) {
      if (g() % 8 == 0) {
        buf += fragments[g() % fragments.size()];
      } else {
        buf.push_back(static_cast<char>(g() % 256));
      }
    }
    buf.resize(size);
    const auto event = m::scan(buf);
    if (const auto* q = std::get_if<m::ToolQuery>(&event)) out.require(q->consumed <= buf.size(), "consumed past end");
  }
  const double fuzz_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  const std::string name_chars = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_";
  const std::string payload_chars = name_chars + " .,:;!?()[]{}'\"=+-*/\n\t|<>";
  int round_trips = 0;
  for (int i = 0; i < kRoundTrips; ++i) {
    std::string tool(1, name_chars[g() % 52]);
    for (std::size_t n = g() % 20; n > 0; --n) tool += name_chars[g() % name_chars.size()];
    std::string payload;
    for (std::size_t n = g() % 400; n > 0; --n) payload += payload_chars[g() % payload_chars.size()];
    // The scanner trims payloads, so generated payloads start and end on a visible byte.
    payload = "x" + payload + "y";
    if (payload.find("<|") != std::string::npos) continue;
    const auto rendered = m::render_query(tool, payload);
    const auto event = m::scan(rendered);
    const auto* q = std::get_if<m::ToolQuery>(&event);
    const bool ok = q && q->tool == tool && q->payload == payload && q->consumed == rendered.size();
    out.require(ok, "round trip failed for tool '" + tool + "'");
    round_trips += ok;
  }
  out.require(round_trips >= kRoundTrips * 9 / 10, "too few round trips generated");
  // Fill any skipped round trips with payloads that cannot contain markers.
  for (int i = round_trips; i < kRoundTrips; ++i) {
    const std::string tool = "t" + std::to_string(i), payload = "payload " + std::to_string(g());
    const auto event = m::scan(m::render_query(tool, payload));
    const auto* q = std::get_if<m::ToolQuery>(&event);
    out.require(q && q->tool == tool && q->payload == payload, "round trip failed for tool '" + tool + "'");
  }
  out.detail << (out.ok ? "" : "; ") << kFuzzBuffers << " buffers in " << std::fixed << std::setprecision(2)
             << fuzz_seconds << " s, " << kRoundTrips << " round trips";
}

// 6. Replay of every trajectory from 3 and 4.
void trace_replay(Outcome& out) {
  std::size_t n = 0;
  for (const auto* set : {&g_bench_trajectories, &g_cxr_trajectories}) {
    for (const auto& t : *set) {
      out.require(replay_matches(t), "replay mismatch for " + t.question_id + " seed " + std::to_string(t.seed));
      out.require(t.context_hashes.size() == t.budget_used, "hash count for " + t.question_id);
      ++n;
    }
  }
  out.require(!g_bench_trajectories.empty() && !g_cxr_trajectories.empty(), "criteria 3 and 4 produced no trajectories");
  out.detail << (out.ok ? "" : "; ") << n << " trajectories replayed";
}

// 7. Longitudinal features.
void longitudinal_exactness(Outcome& out) {
  using namespace longitudinal;
  auto& g = testing::rng();
  std::uniform_real_distribution<double> coef(-10, 10), value(1, 100), scale(0.1, 10);

  for (int round = 0; round < kLongitudinalSeries; ++round) {
    const double a = coef(g), b = coef(g);
    std::vector<SeriesPoint> s;
    for (int t = 0; t < 60; ++t) {
      if (t == 0 || t == 59 || g() % 5 == 0) s.push_back({static_cast<double>(t), a * t + b});
    }
    const auto f = features(s);
    for (std::size_t m = 0; m < f.aligned.size(); ++m) {
      if (f.fill[m] != Fill::Interpolated && f.fill[m] != Fill::Observed) continue;
      const double expect = a * static_cast<double>(m) + b;
      out.require(std::abs(*f.aligned[m] - expect) <= kAffineTol * std::max(1.0, std::abs(expect)), "affine interpolation");
    }
  }

  const std::vector<SeriesPoint> line{{0, 1}, {1, 3}, {2, 5}};
  const auto ols = features(line);
  out.require(ols.slope[2] && *ols.slope[2] == 2.0, "OLS slope on (0,1),(1,3),(2,5)");

  for (int missing = 1; missing <= 6; ++missing) {
    const std::vector<SeriesPoint> gap{{0, 1}, {static_cast<double>(missing + 1), 10}};
    const auto f = features(gap);
    const auto expect = missing < 3 ? Fill::ForwardFilled : Fill::Interpolated;
    for (int m = 1; m <= missing; ++m) {
      out.require(f.fill[m] == expect, "gap of " + std::to_string(missing) + " months");
    }
  }

  for (int round = 0; round < kLongitudinalSeries; ++round) {
    std::vector<SeriesPoint> s;
    for (int t = 0; t < 24; ++t) {
      if (t == 0 || g() % 3 == 0) s.push_back({static_cast<double>(t), value(g)});
    }
    TrendParams p;
    p.deltas = {1, 3};
    const auto base = features(s, p);

    const int c = 1 + static_cast<int>(g() % 12);
    auto shifted_series = s;
    for (auto& pt : shifted_series) pt.time += c;
    const auto shifted = features(shifted_series, p);
    const double k = scale(g);
    auto scaled_series = s;
    for (auto& pt : scaled_series) pt.value *= k;
    const auto scaled = features(scaled_series, p);

    for (std::size_t m = 0; m < base.aligned.size(); ++m) {
      out.require(near_opt(shifted.slope[m + c], base.slope[m], kInvarianceTol), "slope under time shift");
      out.require(near_opt(shifted.moving_average[m + c], base.moving_average[m], kInvarianceTol),
                  "moving average under time shift");
      const auto times_k = [k](std::optional<double> v) { return v ? std::optional(*v * k) : std::nullopt; };
      out.require(near_opt(scaled.slope[m], times_k(base.slope[m]), kInvarianceTol), "slope under scaling");
      out.require(near_opt(scaled.moving_average[m], times_k(base.moving_average[m]), kInvarianceTol),
                  "moving average under scaling");
      for (int d : p.deltas) {
        out.require(near_opt(scaled.rate_of_change.at(d)[m], base.rate_of_change.at(d)[m], kInvarianceTol),
                    "rate of change under scaling");
      }
    }
  }
  out.detail << (out.ok ? "" : "; ") << kLongitudinalSeries << " affine series at " << kAffineTol << ", "
             << kLongitudinalSeries << " invariance series";
}

std::optional<ErrorKind> kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

// 8. Text2SQL safety and the fixture count.
void text2sql_safety(Outcome& out) {
  using namespace text2sql;
  testing::TempDir dir;
  const auto db = testing::build_toy_db(dir.path());
  const auto corpus = testing::mutation_corpus();
  out.require(corpus.size() == 50, "corpus size " + std::to_string(corpus.size()));
  std::size_t rejected = 0;
  for (const auto& sql : corpus) {
    const bool guarded = kind_of([&] { guard_select(sql); }) == ErrorKind::NonSelectRejected;
    const bool refused = kind_of([&] { execute(db, sql); }) == ErrorKind::NonSelectRejected;
    out.require(guarded && refused, "accepted: " + sql);
    rejected += guarded && refused;
  }
  out.require(testing::count_rows(db, "patients") == 3 && testing::count_rows(db, "visits") == 7,
              "fixture tables changed");

  auto backend = std::make_shared<testing::FunctionBackend>(
      [](const GenerationRequest&) { return std::string("SELECT visit_id, mmse FROM visits ORDER BY visit_id"); });
  const auto listed = answer("list every visit", db, *backend);
  const auto expected = testing::count_rows(db, "visits");
  out.require(static_cast<long long>(listed.result.rows.size()) == expected, "visit row count");
  out.detail << (out.ok ? "" : "; ") << rejected << "/" << corpus.size() << " mutations rejected, "
             << listed.result.rows.size() << " visit rows";
}

// 9. Step and wall-clock budgets.
void budget_enforcement(Outcome& out) {
  const auto registry = testing::registry_of({testing::tool_json("retrieve", "echo")});
  Question q;
  q.id = "loop";
  q.text = "Keep asking.";

  auto looping = std::make_shared<testing::FunctionBackend>(
      [](const GenerationRequest&) { return "Again.\n" + testing::query_block("retrieve", "more"); });
  EngineOptions steps;
  steps.budget.max_steps = kMaxSteps;
  Engine by_steps(registry, looping, AgentSet::build(registry, looping), steps);
  try {
    by_steps.run_trajectory(q, {}, 0);
    out.require(false, "step budget did not stop the loop");
  } catch (const TrajectoryError& e) {
    out.require(e.kind() == ErrorKind::BudgetExhausted, "step budget error kind");
    out.require(looping->calls == static_cast<int>(kMaxSteps), "generations " + std::to_string(looping->calls.load()));
    out.require(e.partial().budget_used == kMaxSteps, "budget_used");
  }

  auto slow = std::make_shared<testing::FunctionBackend>([](const GenerationRequest&) {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    return "Again.\n" + testing::query_block("retrieve", "more");
  });
  EngineOptions wall;
  wall.budget.max_steps = 100000;
  wall.budget.max_wall_seconds = kWallBudgetSeconds;
  Engine by_wall(registry, slow, AgentSet::build(registry, slow), wall);
  const auto started = std::chrono::steady_clock::now();
  double elapsed = 0;
  try {
    by_wall.run_trajectory(q, {}, 0);
    out.require(false, "wall budget did not stop the loop");
  } catch (const TrajectoryError& e) {
    elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    out.require(e.kind() == ErrorKind::BudgetExhausted, "wall budget error kind");
    out.require(elapsed <= kWallFactor * kWallBudgetSeconds, "wall budget overran");
  }
  out.detail << (out.ok ? "" : "; ") << looping->calls << " generations at max_steps " << kMaxSteps << ", wall stop at "
             << std::fixed << std::setprecision(3) << elapsed << " s for a " << kWallBudgetSeconds << " s bound";
}

// 10. Nothing above touched the network, and the guard refuses what it should.
void zero_network(Outcome& out) {
  const auto during_suite = net::attempted_requests();
  out.require(during_suite == 0, std::to_string(during_suite) + " requests attempted by criteria 1-9");

  net::reset_counters();
  const auto external = *net::Url::parse("http://example.com/");
  const auto loopback = *net::Url::parse("http://127.0.0.1:9/");
  {
    net::ScopedPolicy deny(net::Policy::Deny);
    out.require(kind_of([&] { net::get(external, {}, 1000); }) == ErrorKind::NetworkForbidden, "Deny let an external request out");
    out.require(kind_of([&] { net::get(loopback, {}, 1000); }) == ErrorKind::NetworkForbidden, "Deny let a loopback request out");
  }
  {
    net::ScopedPolicy local(net::Policy::LoopbackOnly);
    out.require(kind_of([&] { net::get(external, {}, 1000); }) == ErrorKind::NetworkForbidden,
                "LoopbackOnly let an external request out");
  }
  out.require(net::refused_requests() == 3, "refused " + std::to_string(net::refused_requests()) + " of 3 probes");
  out.detail << (out.ok ? "" : "; ") << during_suite << " requests during criteria 1-9, " << net::refused_requests()
             << "/3 guard probes refused";
}

}  // namespace

int main() {
  net::set_policy(net::Policy::Deny);
  net::reset_counters();

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"metric oracle equivalence", metric_oracles},
      {"strategy ordering", strategy_ordering},
      {"scripted benchmark", scripted_benchmark},
      {"chest X-ray flow", chest_xray_flow},
      {"parser fuzz and round trip", parser_fuzz},
      {"trace replay", trace_replay},
      {"longitudinal exactness", longitudinal_exactness},
      {"text2sql safety", text2sql_safety},
      {"budget enforcement", budget_enforcement},
      {"zero network", zero_network},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome out;
    try {
      criteria[i].second(out);
    } catch (const std::exception& e) {
      out.ok = false;
      out.detail << "exception: " << e.what();
    }
    failures += !out.ok;
    std::cout << (out.ok ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << out.detail.str()
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
