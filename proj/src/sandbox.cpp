#include "agentguard/sandbox.hpp"

#include <algorithm>
#include <cstdlib>

#include "agentguard/errors.hpp"
#include "agentguard/json_util.hpp"
#include "agentguard/policy.hpp"

namespace agentguard {

bool VirtualEnv::endpoint_authorized(const std::string& name) const {
  auto entry = net.find(name);
  return entry != net.end() && entry->second.authorized;
}

std::optional<std::string> normalize_path(const std::string& path) {
  if (path.empty() || path.front() != '/') {
    return std::nullopt;
  }
  std::vector<std::string> segments;
  std::size_t pos = 1;
  while (pos <= path.size()) {
    std::size_t next = path.find('/', pos);
    if (next == std::string::npos) next = path.size();
    std::string segment = path.substr(pos, next - pos);
    if (segment == "..") {
      if (segments.empty()) {
        return std::nullopt;  // escapes the root
      }
      segments.pop_back();
    } else if (!segment.empty() && segment != ".") {
      segments.push_back(std::move(segment));
    }
    pos = next + 1;
  }
  if (segments.empty()) {
    return "/";
  }
  std::string out;
  for (const std::string& segment : segments) {
    out += '/';
    out += segment;
  }
  return out;
}

namespace {

bool path_under(const std::string& path, const std::string& prefix) {
  if (path == prefix) return true;
  if (prefix == "/") return !path.empty() && path.front() == '/';
  return path.size() > prefix.size() && path.compare(0, prefix.size(), prefix) == 0 &&
         path[prefix.size()] == '/';
}

}  // namespace

std::string to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::file_modified_under: return "file_modified_under";
    case DetectorKind::sensitive_data_egressed: return "sensitive_data_egressed";
    case DetectorKind::message_sent_unauthorized: return "message_sent_unauthorized";
    case DetectorKind::process_spawned: return "process_spawned";
    case DetectorKind::purchase_placed: return "purchase_placed";
  }
  return "file_modified_under";
}

std::optional<DetectorKind> detector_kind_from_string(const std::string& value) {
  static const std::pair<const char*, DetectorKind> table[] = {
      {"file_modified_under", DetectorKind::file_modified_under},
      {"sensitive_data_egressed", DetectorKind::sensitive_data_egressed},
      {"message_sent_unauthorized", DetectorKind::message_sent_unauthorized},
      {"process_spawned", DetectorKind::process_spawned},
      {"purchase_placed", DetectorKind::purchase_placed},
  };
  for (const auto& [name, kind] : table) {
    if (value == name) return kind;
  }
  return std::nullopt;
}

void validate_detector(const OutcomeDetector& detector) {
  auto param = [&](const char* key) -> std::optional<std::string> {
    auto entry = detector.params.find(key);
    if (entry == detector.params.end()) return std::nullopt;
    return entry->second;
  };
  switch (detector.kind) {
    case DetectorKind::file_modified_under: {
      auto prefix = param("path_prefix");
      if (!prefix) {
        throw ValidationError("detector file_modified_under requires param \"path_prefix\"");
      }
      auto normalized = normalize_path(*prefix);
      if (!normalized || *normalized != *prefix) {
        throw ValidationError("detector path_prefix must be an absolute normalized path, got \"" +
                              *prefix + "\"");
      }
      break;
    }
    case DetectorKind::sensitive_data_egressed:
      if (!param("label") || param("label")->empty()) {
        throw ValidationError("detector sensitive_data_egressed requires param \"label\"");
      }
      break;
    case DetectorKind::process_spawned:
      if (!param("name") || param("name")->empty()) {
        throw ValidationError("detector process_spawned requires param \"name\"");
      }
      break;
    case DetectorKind::message_sent_unauthorized:
    case DetectorKind::purchase_placed:
      break;
  }
}

std::string to_string(StepStatus status) {
  switch (status) {
    case StepStatus::ok: return "ok";
    case StepStatus::denied: return "denied";
    case StepStatus::tool_error: return "tool_error";
  }
  return "ok";
}

std::optional<StepStatus> step_status_from_string(const std::string& value) {
  if (value == "ok") return StepStatus::ok;
  if (value == "denied") return StepStatus::denied;
  if (value == "tool_error") return StepStatus::tool_error;
  return std::nullopt;
}

void to_json(nlohmann::json& j, const VirtualEnv& env) {
  nlohmann::json fs = nlohmann::json::object();
  for (const auto& [path, state] : env.fs) {
    fs[path] = {{"content", state.content},
                {"labels", std::vector<std::string>(state.labels.begin(), state.labels.end())},
                {"writable", state.writable}};
  }
  nlohmann::json net = nlohmann::json::object();
  for (const auto& [endpoint, state] : env.net) {
    net[endpoint] = {{"authorized", state.authorized}};
  }
  nlohmann::json processes = nlohmann::json::array();
  for (const ProcessRecord& process : env.processes) {
    processes.push_back({{"name", process.name}});
  }
  nlohmann::json outbox = nlohmann::json::array();
  for (const OutboxEntry& entry : env.outbox) {
    outbox.push_back({{"recipient", entry.recipient},
                      {"payload", entry.payload},
                      {"recipient_authorized", entry.recipient_authorized},
                      {"purchase", entry.purchase}});
  }
  nlohmann::json egress = nlohmann::json::array();
  for (const EgressEntry& entry : env.egress_log) {
    egress.push_back({{"endpoint", entry.endpoint}, {"payload", entry.payload}});
  }
  j = nlohmann::json{{"fs", std::move(fs)},
                     {"net", std::move(net)},
                     {"processes", std::move(processes)},
                     {"outbox", std::move(outbox)},
                     {"egress_log", std::move(egress)}};
}

std::string env_digest(const VirtualEnv& env) {
  nlohmann::json j = env;
  return fnv1a64_hex(j.dump());
}

void to_json(nlohmann::json& j, const ToolInvocation& inv) {
  j = nlohmann::json{{"tool", inv.tool}, {"action", inv.action}, {"args", inv.args}};
}

void from_json(const nlohmann::json& j, ToolInvocation& inv) {
  inv.tool = j.at("tool").get<std::string>();
  inv.action = j.at("action").get<std::string>();
  inv.args.clear();
  if (j.contains("args")) {
    if (!j["args"].is_object()) {
      throw ValidationError("invocation args must be an object");
    }
    for (const auto& [key, value] : j["args"].items()) {
      if (value.is_string()) {
        inv.args[key] = value.get<std::string>();
      } else if (value.is_number_integer()) {
        inv.args[key] = std::to_string(value.get<long long>());
      } else {
        throw ValidationError("invocation arg \"" + key + "\" must be a string or integer");
      }
    }
  }
}

void to_json(nlohmann::json& j, const OrchestrationPlan& plan) {
  j = nlohmann::json{{"plan_id", plan.plan_id}, {"steps", plan.steps}};
}

void to_json(nlohmann::json& j, const OutcomeDetector& detector) {
  j = nlohmann::json{{"detector_id", detector.detector_id},
                     {"kind", to_string(detector.kind)},
                     {"params", detector.params}};
}

void to_json(nlohmann::json& j, const DetectionResult& result) {
  j = nlohmann::json{{"detector_id", result.detector_id},
                     {"triggered", result.triggered},
                     {"evidence", result.evidence}};
}

void from_json(const nlohmann::json& j, DetectionResult& result) {
  result.detector_id = j.at("detector_id").get<std::string>();
  result.triggered = j.at("triggered").get<bool>();
  result.evidence = j.at("evidence").get<std::string>();
}

OrchestrationPlan parse_plan(const nlohmann::json& j) {
  if (!j.is_object()) {
    throw ValidationError("plan must be a JSON object");
  }
  OrchestrationPlan plan;
  if (j.contains("plan_id")) {
    if (!j["plan_id"].is_string()) {
      throw ValidationError("plan_id must be a string");
    }
    plan.plan_id = j["plan_id"].get<std::string>();
  }
  if (!j.contains("steps") || !j["steps"].is_array()) {
    throw ValidationError("plan.steps must be an array");
  }
  if (j["steps"].empty()) {
    throw ValidationError("plan.steps is empty");
  }
  for (const auto& step_json : j["steps"]) {
    if (!step_json.is_object() || !step_json.contains("tool") || !step_json.contains("action")) {
      throw ValidationError("plan step needs \"tool\" and \"action\"");
    }
    ToolInvocation inv;
    from_json(step_json, inv);
    plan.steps.push_back(std::move(inv));
  }
  return plan;
}

OutcomeDetector parse_detector(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    throw ValidationError("detector needs a \"kind\"");
  }
  OutcomeDetector detector;
  if (j.contains("detector_id")) {
    detector.detector_id = j["detector_id"].get<std::string>();
  }
  auto kind = detector_kind_from_string(j["kind"].get<std::string>());
  if (!kind) {
    throw ValidationError("unknown detector kind \"" + j["kind"].get<std::string>() + "\"");
  }
  detector.kind = *kind;
  if (j.contains("params")) {
    if (!j["params"].is_object()) {
      throw ValidationError("detector params must be an object");
    }
    for (const auto& [key, value] : j["params"].items()) {
      if (!value.is_string()) {
        throw ValidationError("detector param \"" + key + "\" must be a string");
      }
      detector.params[key] = value.get<std::string>();
    }
  }
  validate_detector(detector);
  return detector;
}

nlohmann::json plan_to_json(const OrchestrationPlan& plan) {
  nlohmann::json j = plan;
  return j;
}

nlohmann::json detector_to_json(const OutcomeDetector& detector) {
  nlohmann::json j = detector;
  return j;
}

EnvFixture load_env_fixture(const std::string& document) {
  nlohmann::json j = parse_json(document, "environment fixture");
  if (!j.is_object()) {
    throw ValidationError("environment fixture must be a JSON object");
  }
  EnvFixture fixture;
  if (j.contains("env_id")) {
    if (!j["env_id"].is_string()) {
      throw ValidationError("env_id must be a string");
    }
    fixture.env_id = j["env_id"].get<std::string>();
  }
  if (j.contains("fs")) {
    if (!j["fs"].is_object()) {
      throw ValidationError("fixture fs must be an object");
    }
    for (const auto& [path, state_json] : j["fs"].items()) {
      auto normalized = normalize_path(path);
      if (!normalized || *normalized != path) {
        throw ValidationError("fixture fs path must be absolute and normalized: \"" + path + "\"");
      }
      FileState state;
      if (state_json.contains("content")) {
        state.content = state_json.at("content").get<std::string>();
      }
      if (state_json.contains("labels")) {
        for (const auto& label : state_json.at("labels")) {
          state.labels.insert(label.get<std::string>());
        }
      }
      if (state_json.contains("writable")) {
        state.writable = state_json.at("writable").get<bool>();
      }
      fixture.env.fs.emplace(path, std::move(state));
    }
  }
  if (j.contains("net")) {
    if (!j["net"].is_object()) {
      throw ValidationError("fixture net must be an object");
    }
    for (const auto& [endpoint, state_json] : j["net"].items()) {
      EndpointState state;
      if (state_json.contains("authorized")) {
        state.authorized = state_json.at("authorized").get<bool>();
      }
      fixture.env.net.emplace(endpoint, state);
    }
  }
  for (const char* key : {"processes", "outbox", "egress_log"}) {
    if (j.contains(key) && !(j[key].is_array() && j[key].empty())) {
      throw ValidationError(std::string("fixture ") + key + " must start empty");
    }
  }
  return fixture;
}

EnvFixture load_env_fixture_file(const std::filesystem::path& path) {
  EnvFixture fixture = load_env_fixture(read_text_file(path));
  if (fixture.env_id.empty()) {
    fixture.env_id = path.stem().string();
  }
  return fixture;
}

ResourceArgs resolve_resource_args(const ToolInvocation& invocation, const ToolAction& action) {
  ResourceArgs resolved;
  auto arg_value = [&](const ParamSpec* param) -> std::optional<std::string> {
    if (param == nullptr) return std::nullopt;
    auto entry = invocation.args.find(param->name);
    if (entry == invocation.args.end()) return std::nullopt;
    return entry->second;
  };
  if (auto raw = arg_value(action.find_param(ParamKind::path))) {
    resolved.path = normalize_path(*raw);
    if (!resolved.path) {
      resolved.path = *raw;  // left raw; argument validation reports the error
    }
  }
  resolved.endpoint = arg_value(action.find_param(ParamKind::endpoint));
  resolved.recipient = arg_value(action.find_param(ParamKind::recipient));
  resolved.payload = arg_value(action.find_param(ParamKind::text));
  if (!resolved.payload) {
    resolved.payload = arg_value(action.find_param(ParamKind::bytes));
  }
  return resolved;
}

std::string resolved_process_name(const ToolInvocation& invocation, const ToolAction& action) {
  if (const ParamSpec* text = action.find_param(ParamKind::text)) {
    auto entry = invocation.args.find(text->name);
    if (entry != invocation.args.end()) return entry->second;
  }
  if (!action.params.empty()) {
    auto entry = invocation.args.find(action.params.front().name);
    if (entry != invocation.args.end()) return entry->second;
  }
  return action.name;
}

namespace {

// Checks declared arguments. Returns an error description or nullopt.
std::optional<std::string> validate_args(const ToolInvocation& invocation,
                                         const ToolAction& action) {
  for (const ParamSpec& param : action.params) {
    auto entry = invocation.args.find(param.name);
    if (entry == invocation.args.end()) {
      return "argument error: missing parameter \"" + param.name + "\" for " + invocation.tool +
             "." + invocation.action;
    }
    if (param.kind == ParamKind::integer) {
      const std::string& value = entry->second;
      char* end = nullptr;
      std::strtoll(value.c_str(), &end, 10);
      if (value.empty() || end == nullptr || *end != '\0') {
        return "argument error: parameter \"" + param.name + "\" must be an integer, got \"" +
               value + "\"";
      }
    }
    if (param.kind == ParamKind::path) {
      if (!normalize_path(entry->second)) {
        return "argument error: parameter \"" + param.name + "\" must be an absolute path, got \"" +
               entry->second + "\"";
      }
    }
  }
  return std::nullopt;
}

// Applies the single effect of a well-formed invocation. Returns an error
// description when the environment rejects it (read-only target, missing
// resource parameter on an effectful action).
std::optional<std::string> apply_effect(VirtualEnv& env, const ToolInvocation& invocation,
                                        const ToolAction& action) {
  const ResourceArgs resolved = resolve_resource_args(invocation, action);
  switch (action.effect_category) {
    case EffectCategory::file_read:
    case EffectCategory::net_receive:
    case EffectCategory::none:
      return std::nullopt;  // no environment effect
    case EffectCategory::file_write: {
      if (!resolved.path) {
        return "file_write action \"" + invocation.action + "\" declares no path parameter";
      }
      auto entry = env.fs.find(*resolved.path);
      if (entry != env.fs.end()) {
        if (!entry->second.writable) {
          return "path not writable: " + *resolved.path;
        }
        entry->second.content = resolved.payload.value_or("");
      } else {
        FileState state;
        state.content = resolved.payload.value_or("");
        env.fs.emplace(*resolved.path, std::move(state));
      }
      return std::nullopt;
    }
    case EffectCategory::net_send: {
      if (!resolved.endpoint) {
        return "net_send action \"" + invocation.action + "\" declares no endpoint parameter";
      }
      env.egress_log.push_back({*resolved.endpoint, resolved.payload.value_or("")});
      return std::nullopt;
    }
    case EffectCategory::msg_send: {
      if (!resolved.recipient) {
        return "msg_send action \"" + invocation.action + "\" declares no recipient parameter";
      }
      env.outbox.push_back({*resolved.recipient, resolved.payload.value_or(""),
                            env.endpoint_authorized(*resolved.recipient), false});
      return std::nullopt;
    }
    case EffectCategory::proc_spawn: {
      env.processes.push_back({resolved_process_name(invocation, action)});
      return std::nullopt;
    }
    case EffectCategory::purchase: {
      const std::string recipient = resolved.recipient.value_or("");
      const bool authorized = recipient.empty() ? true : env.endpoint_authorized(recipient);
      env.outbox.push_back({recipient, resolved.payload.value_or(""), authorized, true});
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace

ExecutionResult execute_plan(const OrchestrationPlan& plan, const VirtualEnv& env,
                             const AgentProfile& profile, const ConstraintSet* constraints,
                             bool halt_on_deny) {
  ExecutionResult result;
  result.env = env;
  result.record.plan_id = plan.plan_id;
  result.record.initial_env_digest = env_digest(result.env);

  for (const ToolInvocation& invocation : plan.steps) {
    StepResult step;
    step.invocation = invocation;

    const ToolSpec* tool = profile.find_tool(invocation.tool);
    const ToolAction* action = tool ? tool->find_action(invocation.action) : nullptr;
    if (action == nullptr) {
      step.status = StepStatus::tool_error;
      step.error = tool == nullptr
                       ? "unknown invocation: tool \"" + invocation.tool + "\" is not declared"
                       : "unknown invocation: tool \"" + invocation.tool + "\" has no action \"" +
                             invocation.action + "\"";
      result.record.step_results.push_back(std::move(step));
      continue;
    }

    if (auto arg_error = validate_args(invocation, *action)) {
      step.status = StepStatus::tool_error;
      step.error = *arg_error;
      result.record.step_results.push_back(std::move(step));
      continue;
    }

    if (constraints != nullptr) {
      CheckResult verdict = check(*constraints, invocation, *action, result.env);
      if (verdict.denied) {
        step.status = StepStatus::denied;
        step.constraint_id = verdict.constraint_id;
        result.record.step_results.push_back(std::move(step));
        if (halt_on_deny) break;
        continue;
      }
    }

    if (auto effect_error = apply_effect(result.env, invocation, *action)) {
      step.status = StepStatus::tool_error;
      step.error = *effect_error;
    }
    result.record.step_results.push_back(std::move(step));
  }

  result.record.final_env_digest = env_digest(result.env);
  return result;
}

DetectionResult detect(const OutcomeDetector& detector, const ExecutionRecord& record,
                       const VirtualEnv& before, const VirtualEnv& after) {
  (void)record;  // detectors are defined purely over the environment delta
  DetectionResult result;
  result.detector_id = detector.detector_id;

  auto param = [&](const char* key) -> std::string {
    auto entry = detector.params.find(key);
    return entry == detector.params.end() ? std::string() : entry->second;
  };

  switch (detector.kind) {
    case DetectorKind::file_modified_under: {
      const std::string prefix = param("path_prefix");
      std::set<std::string> paths;
      for (const auto& [path, state] : before.fs) paths.insert(path);
      for (const auto& [path, state] : after.fs) paths.insert(path);
      for (const std::string& path : paths) {
        if (!path_under(path, prefix)) continue;
        auto b = before.fs.find(path);
        auto a = after.fs.find(path);
        const bool in_before = b != before.fs.end();
        const bool in_after = a != after.fs.end();
        if (in_before != in_after || (in_before && b->second.content != a->second.content)) {
          result.triggered = true;
          result.evidence = path;
          return result;
        }
      }
      return result;
    }
    case DetectorKind::sensitive_data_egressed: {
      const std::string label = param("label");
      std::vector<const std::string*> contents;
      for (const auto& [path, state] : before.fs) {
        if (state.labels.contains(label) && !state.content.empty()) {
          contents.push_back(&state.content);
        }
      }
      for (std::size_t i = before.egress_log.size(); i < after.egress_log.size(); ++i) {
        for (const std::string* content : contents) {
          if (after.egress_log[i].payload.find(*content) != std::string::npos) {
            result.triggered = true;
            result.evidence = after.egress_log[i].endpoint.empty() ? "unnamed endpoint"
                                                                   : after.egress_log[i].endpoint;
            return result;
          }
        }
      }
      for (std::size_t i = before.outbox.size(); i < after.outbox.size(); ++i) {
        for (const std::string* content : contents) {
          if (after.outbox[i].payload.find(*content) != std::string::npos) {
            result.triggered = true;
            result.evidence = after.outbox[i].recipient.empty() ? "unnamed recipient"
                                                                : after.outbox[i].recipient;
            return result;
          }
        }
      }
      return result;
    }
    case DetectorKind::message_sent_unauthorized: {
      for (std::size_t i = before.outbox.size(); i < after.outbox.size(); ++i) {
        if (!after.outbox[i].recipient_authorized) {
          result.triggered = true;
          result.evidence = after.outbox[i].recipient.empty() ? "unnamed recipient"
                                                              : after.outbox[i].recipient;
          return result;
        }
      }
      return result;
    }
    case DetectorKind::process_spawned: {
      const std::string name = param("name");
      for (std::size_t i = before.processes.size(); i < after.processes.size(); ++i) {
        if (after.processes[i].name.find(name) != std::string::npos) {
          result.triggered = true;
          result.evidence = after.processes[i].name;
          return result;
        }
      }
      return result;
    }
    case DetectorKind::purchase_placed: {
      for (std::size_t i = before.outbox.size(); i < after.outbox.size(); ++i) {
        if (after.outbox[i].purchase) {
          result.triggered = true;
          result.evidence = after.outbox[i].recipient.empty() ? "order placed"
                                                              : after.outbox[i].recipient;
          return result;
        }
      }
      return result;
    }
  }
  return result;
}

}  // namespace agentguard
