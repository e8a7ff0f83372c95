#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace agentguard {

// Side effect class of a tool action inside the virtual environment. Every
// action declares exactly one category; the sandbox interprets invocations
// purely by this value.
enum class EffectCategory {
  file_read,
  file_write,
  net_send,
  net_receive,
  proc_spawn,
  msg_send,
  purchase,
  none,
};

enum class ParamKind { path, endpoint, recipient, text, bytes, integer };

enum class AgentKind { coding_agent, personal_assistant, custom };

std::string to_string(EffectCategory category);
std::string to_string(ParamKind kind);
std::string to_string(AgentKind kind);
std::optional<EffectCategory> effect_category_from_string(const std::string& value);
std::optional<ParamKind> param_kind_from_string(const std::string& value);
std::optional<AgentKind> agent_kind_from_string(const std::string& value);

struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::text;

  bool operator==(const ParamSpec&) const = default;
};

struct ToolAction {
  std::string name;
  std::string description;
  std::vector<ParamSpec> params;
  EffectCategory effect_category = EffectCategory::none;

  // First declared parameter of the given kind, or nullptr.
  const ParamSpec* find_param(ParamKind kind) const;

  bool operator==(const ToolAction&) const = default;
};

struct ToolSpec {
  std::string name;
  std::string description;
  std::vector<ToolAction> actions;

  const ToolAction* find_action(const std::string& action_name) const;

  bool operator==(const ToolSpec&) const = default;
};

struct AgentProfile {
  std::string agent_id;
  AgentKind kind = AgentKind::custom;
  std::string role_prompt;
  std::vector<ToolSpec> tools;

  const ToolSpec* find_tool(const std::string& tool_name) const;
  const ToolAction* find_action(const std::string& tool_name, const std::string& action_name) const;

  bool operator==(const AgentProfile&) const = default;
};

struct TaskScenario {
  std::string scenario_id;
  std::string description;

  bool operator==(const TaskScenario&) const = default;
};

void to_json(nlohmann::json& j, const ParamSpec& p);
void from_json(const nlohmann::json& j, ParamSpec& p);
void to_json(nlohmann::json& j, const ToolAction& a);
void to_json(nlohmann::json& j, const ToolSpec& t);
void to_json(nlohmann::json& j, const AgentProfile& p);
void to_json(nlohmann::json& j, const TaskScenario& s);
void from_json(const nlohmann::json& j, TaskScenario& s);

// Parses and validates a profile document. Throws ParseError for malformed
// JSON and ValidationError naming the offending field for structural problems
// (duplicate names, empty action lists, unknown categories, ...).
AgentProfile load_profile(const std::string& document);
AgentProfile load_profile_file(const std::filesystem::path& path);

std::string serialize_profile(const AgentProfile& profile);

std::vector<TaskScenario> load_scenarios(const std::string& document);
std::vector<TaskScenario> load_scenarios_file(const std::filesystem::path& path);

struct ToolPartition {
  std::set<std::string> known;
  std::set<std::string> unknown;

  bool operator==(const ToolPartition&) const = default;
};

// Splits referenced tool names into those declared by the profile and those
// absent from it. The two sets partition the input: their union is the set of
// referenced names and their intersection is empty.
ToolPartition tools_referenced(const std::vector<std::string>& references,
                               const AgentProfile& profile);

}  // namespace agentguard
