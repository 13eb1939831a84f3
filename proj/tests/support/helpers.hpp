#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <atomic>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "orchestra/backend.hpp"
#include "orchestra/markers.hpp"
#include "orchestra/registry.hpp"
#include "tempdir.hpp"

namespace testing {

namespace fs = std::filesystem;
using nlohmann::json;

inline fs::path data_dir() { return fs::path(ORCHESTRA_TEST_DATA_DIR); }

/// Independent FNV-1a so script keys do not depend on the code under test.
inline std::string fingerprint(const std::string& last, std::size_t step) {
  auto fnv = [](const std::string& s, std::uint64_t h) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  };
  std::uint64_t h = fnv(last, 0xcbf29ce484222325ULL);
  h = fnv("\x1f" + std::to_string(step), h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string query_block(const std::string& tool, const std::string& payload) {
  return "<|begin_" + tool + "_query|>\n" + payload + "\n<|end_" + tool + "_query|>";
}
inline std::string result_block(const std::string& tool, const std::string& payload) {
  return "<|begin_" + tool + "_result|>\n" + payload + "\n<|end_" + tool + "_result|>";
}
inline std::string answer_block(const std::string& text) { return "<|begin_answer|>\n" + text + "\n<|end_answer|>"; }

/// Builds scripted-backend entries turn by turn.
class Script {
 public:
  Script& on(const std::string& last, std::size_t step, const std::string& response,
             std::optional<std::int64_t> seed = std::nullopt) {
    entries_.push_back({fingerprint(last, step), seed, response});
    return *this;
  }
  std::shared_ptr<orchestra::ScriptedBackend> backend(bool honor_stops = true) const {
    return std::make_shared<orchestra::ScriptedBackend>(entries_, honor_stops);
  }
  std::string jsonl() const {
    std::string out;
    for (const auto& e : entries_) {
      json j = {{"fingerprint", e.fingerprint}, {"response", e.response}};
      if (e.seed) j["seed"] = *e.seed;
      out += j.dump() + "\n";
    }
    return out;
  }

 private:
  std::vector<orchestra::ScriptEntry> entries_;
};

inline json tool_json(const std::string& name, const std::string& agent_id, json config = json::object()) {
  return {{"name", name},
          {"description", "The " + name + " tool."},
          {"input_spec", "free text"},
          {"output_spec", "free text"},
          {"kind", "builtin"},
          {"agent_id", agent_id},
          {"config", std::move(config)}};
}

inline json registry_json(json tools) {
  return {{"system_preamble", "You are a careful clinical assistant."},
          {"answer_instructions", "Wrap the final answer in <|begin_answer|> and <|end_answer|>."},
          {"tools", std::move(tools)}};
}

inline orchestra::Registry registry_of(json tools) { return orchestra::Registry::load(registry_json(std::move(tools))); }

/// Deterministic generator shared by property tests.
inline std::mt19937_64& rng() {
  static std::mt19937_64 gen(20240917);
  return gen;
}

}  // namespace testing

namespace testing {

/// Requests a test deliberately sends at a non-loopback host to prove the
/// guard refuses them. The unit-test main subtracts these before checking
/// that nothing else tried to leave the machine.
inline std::size_t intentional_refusals = 0;

}  // namespace testing

namespace testing {

/// Backend driven by a callback over the request; for loops that a fixed
/// script cannot express (unbounded queries, slow responses).
class FunctionBackend : public orchestra::Backend {
 public:
  using Fn = std::function<std::string(const orchestra::GenerationRequest&)>;
  explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}
  orchestra::GenerationResult generate(const orchestra::GenerationRequest& request) override {
    ++calls;
    orchestra::GenerationResult r;
    r.text = fn_(request);
    if (auto hit = orchestra::apply_stop_sequences(r.text, request.stop_sequences)) {
      r.stop = {orchestra::StopReason::Kind::StopSequence, *hit};
    }
    return r;
  }
  std::string describe() const override { return "function"; }
  std::atomic<int> calls{0};

 private:
  Fn fn_;
};

}  // namespace testing

namespace testing {

/// Structural JSON equality with numbers compared to within `tol`.
inline bool json_close(const json& a, const json& b, double tol = 1e-12) {
  if (a.is_number() && b.is_number()) return std::abs(a.get<double>() - b.get<double>()) <= tol;
  if (a.type() != b.type()) return false;
  if (a.is_array()) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!json_close(a[i], b[i], tol)) return false;
    }
    return true;
  }
  if (a.is_object()) {
    if (a.size() != b.size()) return false;
    for (const auto& [key, value] : a.items()) {
      if (!b.contains(key) || !json_close(value, b.at(key), tol)) return false;
    }
    return true;
  }
  return a == b;
}

}  // namespace testing
