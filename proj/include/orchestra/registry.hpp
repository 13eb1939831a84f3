#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "orchestra/markers.hpp"

namespace orchestra {

enum class ToolKind { Builtin, External };

struct UsageExample {
  std::string query;
  std::string result;
};

struct ToolDescriptor {
  std::string name;
  std::string description;
  std::string input_spec;
  std::string output_spec;
  std::vector<UsageExample> usage_examples;
  ToolKind kind = ToolKind::Builtin;
  std::string agent_id;  // builtin only
  std::string endpoint;  // external only, absolute URL
  int timeout_ms = 30000;
  std::vector<std::string> aliases;  // legacy bracket tokens
  nlohmann::json config = nlohmann::json::object();  // agent settings
};

enum class Verbosity { Full, Summary };

struct RegistryConfig {
  std::string system_preamble;
  std::string answer_instructions;
  std::vector<ToolDescriptor> tools;
  bool allow_empty = false;
  Verbosity verbosity = Verbosity::Full;
  std::filesystem::path base_dir;  // relative agent paths resolve here
};

/// Validated, immutable tool catalog.
class Registry {
 public:
  /// Throws DuplicateName, BadEndpoint or SchemaViolation.
  static Registry load(const nlohmann::json& document, std::filesystem::path base_dir = {});
  static Registry load_file(const std::filesystem::path& path);
  static Registry from_config(RegistryConfig config);

  const RegistryConfig& config() const { return config_; }
  const std::vector<ToolDescriptor>& tools() const { return config_.tools; }
  std::size_t size() const { return config_.tools.size(); }

  /// Canonical name or legacy alias. Throws UnknownTool.
  const ToolDescriptor& lookup(std::string_view name_or_alias) const;
  const ToolDescriptor* find(std::string_view name_or_alias) const;

  const markers::AliasTable& aliases() const { return aliases_; }

  /// Marker sequences that end a generation segment: every end-of-query
  /// marker plus the answer end marker.
  std::vector<std::string> stop_sequences() const;

 private:
  RegistryConfig config_;
  markers::AliasTable aliases_;
};

struct RenderOptions {
  std::string strategy_preamble;
  std::vector<std::string> tool_priority;  // listed tools first, in this order
};

/// Deterministic model context: preamble, strategy preamble, one section per
/// tool (declaration order unless reordered by priority), answer instructions.
std::string render_context(const Registry& registry, const RenderOptions& options = {});

}  // namespace orchestra
