#include "agentguard/agent_model.hpp"

#include <set>

#include "agentguard/errors.hpp"
#include "agentguard/json_util.hpp"

namespace agentguard {

std::string to_string(EffectCategory category) {
  switch (category) {
    case EffectCategory::file_read: return "file_read";
    case EffectCategory::file_write: return "file_write";
    case EffectCategory::net_send: return "net_send";
    case EffectCategory::net_receive: return "net_receive";
    case EffectCategory::proc_spawn: return "proc_spawn";
    case EffectCategory::msg_send: return "msg_send";
    case EffectCategory::purchase: return "purchase";
    case EffectCategory::none: return "none";
  }
  return "none";
}

std::string to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::path: return "path";
    case ParamKind::endpoint: return "endpoint";
    case ParamKind::recipient: return "recipient";
    case ParamKind::text: return "text";
    case ParamKind::bytes: return "bytes";
    case ParamKind::integer: return "integer";
  }
  return "text";
}

std::string to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::coding_agent: return "coding_agent";
    case AgentKind::personal_assistant: return "personal_assistant";
    case AgentKind::custom: return "custom";
  }
  return "custom";
}

std::optional<EffectCategory> effect_category_from_string(const std::string& value) {
  static const std::pair<const char*, EffectCategory> table[] = {
      {"file_read", EffectCategory::file_read},   {"file_write", EffectCategory::file_write},
      {"net_send", EffectCategory::net_send},     {"net_receive", EffectCategory::net_receive},
      {"proc_spawn", EffectCategory::proc_spawn}, {"msg_send", EffectCategory::msg_send},
      {"purchase", EffectCategory::purchase},     {"none", EffectCategory::none},
  };
  for (const auto& [name, category] : table) {
    if (value == name) return category;
  }
  return std::nullopt;
}

std::optional<ParamKind> param_kind_from_string(const std::string& value) {
  static const std::pair<const char*, ParamKind> table[] = {
      {"path", ParamKind::path},           {"endpoint", ParamKind::endpoint},
      {"recipient", ParamKind::recipient}, {"text", ParamKind::text},
      {"bytes", ParamKind::bytes},         {"integer", ParamKind::integer},
  };
  for (const auto& [name, kind] : table) {
    if (value == name) return kind;
  }
  return std::nullopt;
}

std::optional<AgentKind> agent_kind_from_string(const std::string& value) {
  if (value == "coding_agent") return AgentKind::coding_agent;
  if (value == "personal_assistant") return AgentKind::personal_assistant;
  if (value == "custom") return AgentKind::custom;
  return std::nullopt;
}

const ParamSpec* ToolAction::find_param(ParamKind kind) const {
  for (const ParamSpec& param : params) {
    if (param.kind == kind) return &param;
  }
  return nullptr;
}

const ToolAction* ToolSpec::find_action(const std::string& action_name) const {
  for (const ToolAction& action : actions) {
    if (action.name == action_name) return &action;
  }
  return nullptr;
}

const ToolSpec* AgentProfile::find_tool(const std::string& tool_name) const {
  for (const ToolSpec& tool : tools) {
    if (tool.name == tool_name) return &tool;
  }
  return nullptr;
}

const ToolAction* AgentProfile::find_action(const std::string& tool_name,
                                            const std::string& action_name) const {
  const ToolSpec* tool = find_tool(tool_name);
  return tool ? tool->find_action(action_name) : nullptr;
}

void to_json(nlohmann::json& j, const ParamSpec& p) {
  j = nlohmann::json{{"name", p.name}, {"kind", to_string(p.kind)}};
}

void from_json(const nlohmann::json& j, ParamSpec& p) {
  p.name = j.at("name").get<std::string>();
  auto kind = param_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) {
    throw ValidationError("params.kind: unknown value \"" + j.at("kind").get<std::string>() + "\"");
  }
  p.kind = *kind;
}

void to_json(nlohmann::json& j, const ToolAction& a) {
  j = nlohmann::json{{"name", a.name},
                     {"description", a.description},
                     {"params", a.params},
                     {"effect_category", to_string(a.effect_category)}};
}

void to_json(nlohmann::json& j, const ToolSpec& t) {
  j = nlohmann::json{{"name", t.name}, {"description", t.description}, {"actions", t.actions}};
}

void to_json(nlohmann::json& j, const AgentProfile& p) {
  j = nlohmann::json{{"agent_id", p.agent_id},
                     {"kind", to_string(p.kind)},
                     {"role_prompt", p.role_prompt},
                     {"tools", p.tools}};
}

void to_json(nlohmann::json& j, const TaskScenario& s) {
  j = nlohmann::json{{"scenario_id", s.scenario_id}, {"description", s.description}};
}

void from_json(const nlohmann::json& j, TaskScenario& s) {
  s.scenario_id = j.at("scenario_id").get<std::string>();
  s.description = j.at("description").get<std::string>();
}

namespace {

std::string require_string(const nlohmann::json& j, const std::string& key,
                           const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw ValidationError(where + "." + key + " is missing");
  }
  if (!j[key].is_string()) {
    throw ValidationError(where + "." + key + " must be a string");
  }
  return j[key].get<std::string>();
}

ToolAction parse_action(const nlohmann::json& j, const std::string& where) {
  ToolAction action;
  action.name = require_string(j, "name", where);
  if (action.name.empty()) {
    throw ValidationError(where + ".name is empty");
  }
  action.description = require_string(j, "description", where);
  if (j.contains("params")) {
    if (!j["params"].is_array()) {
      throw ValidationError(where + ".params must be an array");
    }
    std::set<std::string> seen;
    std::size_t index = 0;
    for (const auto& param_json : j["params"]) {
      const std::string param_where = where + ".params[" + std::to_string(index++) + "]";
      ParamSpec param;
      param.name = require_string(param_json, "name", param_where);
      const std::string kind_value = require_string(param_json, "kind", param_where);
      auto kind = param_kind_from_string(kind_value);
      if (!kind) {
        throw ValidationError(param_where + ".kind: unknown value \"" + kind_value + "\"");
      }
      param.kind = *kind;
      if (!seen.insert(param.name).second) {
        throw ValidationError(param_where + ".name: duplicate parameter \"" + param.name + "\"");
      }
      action.params.push_back(std::move(param));
    }
  }
  const std::string category_value = require_string(j, "effect_category", where);
  auto category = effect_category_from_string(category_value);
  if (!category) {
    throw ValidationError(where + ".effect_category: unknown value \"" + category_value + "\"");
  }
  action.effect_category = *category;
  return action;
}

ToolSpec parse_tool(const nlohmann::json& j, const std::string& where) {
  ToolSpec tool;
  tool.name = require_string(j, "name", where);
  if (tool.name.empty()) {
    throw ValidationError(where + ".name is empty");
  }
  tool.description = require_string(j, "description", where);
  if (!j.contains("actions") || !j["actions"].is_array()) {
    throw ValidationError(where + ".actions must be an array");
  }
  if (j["actions"].empty()) {
    throw ValidationError(where + ".actions is empty");
  }
  std::set<std::string> seen;
  std::size_t index = 0;
  for (const auto& action_json : j["actions"]) {
    const std::string action_where = where + ".actions[" + std::to_string(index++) + "]";
    ToolAction action = parse_action(action_json, action_where);
    if (!seen.insert(action.name).second) {
      throw ValidationError(action_where + ".name: duplicate action \"" + action.name + "\"");
    }
    tool.actions.push_back(std::move(action));
  }
  return tool;
}

}  // namespace

AgentProfile load_profile(const std::string& document) {
  nlohmann::json j = parse_json(document, "profile document");
  if (!j.is_object()) {
    throw ValidationError("profile document must be a JSON object");
  }
  AgentProfile profile;
  profile.agent_id = require_string(j, "agent_id", "profile");
  if (profile.agent_id.empty()) {
    throw ValidationError("profile.agent_id is empty");
  }
  const std::string kind_value = require_string(j, "kind", "profile");
  auto kind = agent_kind_from_string(kind_value);
  if (!kind) {
    throw ValidationError("profile.kind: unknown value \"" + kind_value + "\"");
  }
  profile.kind = *kind;
  profile.role_prompt = require_string(j, "role_prompt", "profile");
  if (profile.role_prompt.empty()) {
    throw ValidationError("profile.role_prompt is empty");
  }
  if (!j.contains("tools") || !j["tools"].is_array()) {
    throw ValidationError("profile.tools must be an array");
  }
  std::set<std::string> seen;
  std::size_t index = 0;
  for (const auto& tool_json : j["tools"]) {
    const std::string tool_where = "profile.tools[" + std::to_string(index++) + "]";
    ToolSpec tool = parse_tool(tool_json, tool_where);
    if (!seen.insert(tool.name).second) {
      throw ValidationError(tool_where + ".name: duplicate tool \"" + tool.name + "\"");
    }
    profile.tools.push_back(std::move(tool));
  }
  return profile;
}

AgentProfile load_profile_file(const std::filesystem::path& path) {
  return load_profile(read_text_file(path));
}

std::string serialize_profile(const AgentProfile& profile) {
  nlohmann::json j = profile;
  return j.dump(2) + "\n";
}

std::vector<TaskScenario> load_scenarios(const std::string& document) {
  nlohmann::json j = parse_json(document, "scenario document");
  if (!j.is_array()) {
    throw ValidationError("scenario document must be a JSON array");
  }
  std::vector<TaskScenario> scenarios;
  std::set<std::string> seen;
  std::size_t index = 0;
  for (const auto& entry : j) {
    const std::string where = "scenarios[" + std::to_string(index++) + "]";
    TaskScenario scenario;
    scenario.scenario_id = require_string(entry, "scenario_id", where);
    if (scenario.scenario_id.empty()) {
      throw ValidationError(where + ".scenario_id is empty");
    }
    scenario.description = require_string(entry, "description", where);
    if (!seen.insert(scenario.scenario_id).second) {
      throw ValidationError(where + ".scenario_id: duplicate \"" + scenario.scenario_id + "\"");
    }
    scenarios.push_back(std::move(scenario));
  }
  return scenarios;
}

std::vector<TaskScenario> load_scenarios_file(const std::filesystem::path& path) {
  return load_scenarios(read_text_file(path));
}

ToolPartition tools_referenced(const std::vector<std::string>& references,
                               const AgentProfile& profile) {
  ToolPartition partition;
  for (const std::string& name : references) {
    if (profile.find_tool(name) != nullptr) {
      partition.known.insert(name);
    } else {
      partition.unknown.insert(name);
    }
  }
  return partition;
}

}  // namespace agentguard
