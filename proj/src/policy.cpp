#include "agentguard/policy.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "agentguard/errors.hpp"
#include "agentguard/json_util.hpp"

namespace agentguard {

std::string to_string(ResourceKind kind) {
  switch (kind) {
    case ResourceKind::path_prefix: return "path_prefix";
    case ResourceKind::endpoint: return "endpoint";
    case ResourceKind::recipient_class: return "recipient_class";
    case ResourceKind::process_name: return "process_name";
  }
  return "path_prefix";
}

std::optional<ResourceKind> resource_kind_from_string(const std::string& value) {
  if (value == "path_prefix") return ResourceKind::path_prefix;
  if (value == "endpoint") return ResourceKind::endpoint;
  if (value == "recipient_class") return ResourceKind::recipient_class;
  if (value == "process_name") return ResourceKind::process_name;
  return std::nullopt;
}

namespace {

bool path_under(const std::string& path, const std::string& prefix) {
  if (path == prefix) return true;
  if (prefix == "/") return !path.empty() && path.front() == '/';
  return path.size() > prefix.size() && path.compare(0, prefix.size(), prefix) == 0 &&
         path[prefix.size()] == '/';
}

// Category families a resource kind can attach to.
bool kind_compatible(ResourceKind kind, EffectCategory category) {
  switch (kind) {
    case ResourceKind::path_prefix:
      return category == EffectCategory::file_read || category == EffectCategory::file_write;
    case ResourceKind::endpoint:
      return category == EffectCategory::net_send || category == EffectCategory::net_receive;
    case ResourceKind::recipient_class:
      return category == EffectCategory::msg_send || category == EffectCategory::purchase;
    case ResourceKind::process_name:
      return category == EffectCategory::proc_spawn;
  }
  return false;
}

bool resource_is_wildcard(const std::optional<ResourceMatcher>& resource) {
  if (!resource) return true;
  return resource->kind == ResourceKind::endpoint && resource->value == "*";
}

}  // namespace

void validate_constraint(const SafetyConstraint& constraint) {
  if (constraint.subject.empty()) {
    throw ValidationError("subject must be a tool name or \"*\"");
  }
  if (constraint.resource) {
    const ResourceMatcher& matcher = *constraint.resource;
    switch (matcher.kind) {
      case ResourceKind::path_prefix: {
        auto normalized = normalize_path(matcher.value);
        if (!normalized || *normalized != matcher.value) {
          throw ValidationError("path_prefix must be an absolute normalized path, got \"" +
                                matcher.value + "\"");
        }
        break;
      }
      case ResourceKind::endpoint:
        if (matcher.value.empty()) {
          throw ValidationError("endpoint matcher value is empty");
        }
        break;
      case ResourceKind::recipient_class:
        if (matcher.value != "unauthorized" && matcher.value != "any") {
          throw ValidationError("recipient_class must be \"unauthorized\" or \"any\", got \"" +
                                matcher.value + "\"");
        }
        break;
      case ResourceKind::process_name:
        if (matcher.value.empty()) {
          throw ValidationError("process_name matcher value is empty");
        }
        break;
    }
    if (constraint.action_category &&
        !kind_compatible(matcher.kind, *constraint.action_category)) {
      throw ValidationError("resource kind " + to_string(matcher.kind) +
                            " is incompatible with action category " +
                            to_string(*constraint.action_category));
    }
  }
  if (constraint.subject == "*" && !constraint.action_category &&
      resource_is_wildcard(constraint.resource)) {
    throw ValidationError("unconstrained rule");
  }
}

namespace {

bool resource_matches(const ResourceMatcher& matcher, const ToolInvocation& invocation,
                      const ToolAction& action, const VirtualEnv& env) {
  // A matcher only applies within its category family; a path rule can never
  // match a network call even under a wildcard category.
  if (!kind_compatible(matcher.kind, action.effect_category)) {
    return false;
  }
  const ResourceArgs resolved = resolve_resource_args(invocation, action);
  switch (matcher.kind) {
    case ResourceKind::path_prefix:
      return resolved.path && path_under(*resolved.path, matcher.value);
    case ResourceKind::endpoint:
      return resolved.endpoint && (matcher.value == "*" || *resolved.endpoint == matcher.value);
    case ResourceKind::recipient_class: {
      if (!resolved.recipient) return false;
      if (matcher.value == "any") return true;
      return !env.endpoint_authorized(*resolved.recipient);
    }
    case ResourceKind::process_name:
      return resolved_process_name(invocation, action).find(matcher.value) != std::string::npos;
  }
  return false;
}

}  // namespace

CheckResult check(const ConstraintSet& constraints, const ToolInvocation& invocation,
                  const ToolAction& action, const VirtualEnv& env) {
  for (const SafetyConstraint& constraint : constraints.constraints) {
    if (constraint.subject != "*" && constraint.subject != invocation.tool) {
      continue;
    }
    if (constraint.action_category && *constraint.action_category != action.effect_category) {
      continue;
    }
    if (constraint.resource &&
        !resource_matches(*constraint.resource, invocation, action, env)) {
      continue;
    }
    return {true, constraint.constraint_id};
  }
  return {false, ""};
}

namespace {

OrchestrationPlan subsequence(const OrchestrationPlan& plan, const std::vector<std::size_t>& idx) {
  OrchestrationPlan sub;
  sub.plan_id = plan.plan_id + "/subset";
  for (std::size_t i : idx) {
    sub.steps.push_back(plan.steps[i]);
  }
  return sub;
}

std::string describe_steps(const OrchestrationPlan& plan, const std::vector<std::size_t>& idx) {
  std::ostringstream out;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (k > 0) out << ", ";
    out << "step " << idx[k] << " (" << plan.steps[idx[k]].tool << "."
        << plan.steps[idx[k]].action << ")";
  }
  return out.str();
}

}  // namespace

RootCause analyze_root_cause(const OrchestrationPlan& plan, const VirtualEnv& env,
                             const OutcomeDetector& detector, const AgentProfile& profile,
                             const std::string& workflow_id) {
  auto triggers = [&](const std::vector<std::size_t>& idx) {
    ExecutionResult replay = execute_plan(subsequence(plan, idx), env, profile);
    return detect(detector, replay.record, env, replay.env).triggered;
  };

  const std::size_t n = plan.steps.size();
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  if (n == 0 || !triggers(all)) {
    throw NotReproducible("plan \"" + plan.plan_id + "\" does not trigger detector " +
                          to_string(detector.kind) + " on replay");
  }

  RootCause cause;
  cause.workflow_id = workflow_id.empty() ? plan.plan_id : workflow_id;

  if (n <= 6) {
    // Exhaustive: subsets in increasing size, lexicographic within a size, so
    // the first hit is the canonical minimal subsequence.
    for (std::size_t size = 1; size <= n && cause.causal_steps.empty(); ++size) {
      std::vector<std::size_t> combo(size);
      for (std::size_t i = 0; i < size; ++i) combo[i] = i;
      while (true) {
        if (triggers(combo)) {
          cause.causal_steps = combo;
          break;
        }
        // next combination
        std::size_t i = size;
        while (i > 0 && combo[i - 1] == n - size + i - 1) --i;
        if (i == 0) break;
        ++combo[i - 1];
        for (std::size_t j = i; j < size; ++j) combo[j] = combo[j - 1] + 1;
      }
    }
  } else {
    // Greedy single-step removal to a local minimum; restart from the front
    // after every successful removal.
    std::vector<std::size_t> current = all;
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t i = 0; i < current.size(); ++i) {
        if (current.size() == 1) break;
        std::vector<std::size_t> candidate = current;
        candidate.erase(candidate.begin() + static_cast<std::ptrdiff_t>(i));
        if (triggers(candidate)) {
          current = std::move(candidate);
          changed = true;
          break;
        }
      }
    }
    cause.causal_steps = std::move(current);
  }

  cause.summary = std::to_string(cause.causal_steps.size()) + " of " + std::to_string(n) +
                  " steps reproduce " + to_string(detector.kind) + ": " +
                  describe_steps(plan, cause.causal_steps);
  return cause;
}

void to_json(nlohmann::json& j, const SafetyConstraint& c) {
  j = nlohmann::json{{"constraint_id", c.constraint_id},
                     {"effect", "deny"},
                     {"subject", c.subject},
                     {"action_category", c.action_category ? to_string(*c.action_category) : "*"},
                     {"rationale", c.rationale},
                     {"provenance", c.provenance}};
  if (c.resource) {
    j["resource"] = nlohmann::json{{to_string(c.resource->kind), c.resource->value}};
  }
}

void from_json(const nlohmann::json& j, SafetyConstraint& c) {
  c = SafetyConstraint{};
  if (j.contains("constraint_id")) c.constraint_id = j.at("constraint_id").get<std::string>();
  if (j.contains("subject")) c.subject = j.at("subject").get<std::string>();
  if (j.contains("action_category")) {
    const std::string value = j.at("action_category").get<std::string>();
    if (value != "*") {
      auto category = effect_category_from_string(value);
      if (!category) {
        throw ValidationError("unknown action_category \"" + value + "\"");
      }
      c.action_category = *category;
    }
  }
  if (j.contains("resource") && !j.at("resource").is_null()) {
    const auto& resource = j.at("resource");
    if (!resource.is_object() || resource.size() != 1) {
      throw ValidationError("resource must be an object with exactly one matcher key");
    }
    const auto& [key, value] = *resource.items().begin();
    auto kind = resource_kind_from_string(key);
    if (!kind) {
      throw ValidationError("unknown resource matcher \"" + key + "\"");
    }
    if (!value.is_string()) {
      throw ValidationError("resource matcher \"" + key + "\" must hold a string");
    }
    c.resource = ResourceMatcher{*kind, value.get<std::string>()};
  }
  if (j.contains("rationale")) c.rationale = j.at("rationale").get<std::string>();
  if (j.contains("provenance")) c.provenance = j.at("provenance").get<std::string>();
}

void to_json(nlohmann::json& j, const ConstraintSet& set) {
  j = nlohmann::json{{"constraints", set.constraints}};
}

void from_json(const nlohmann::json& j, ConstraintSet& set) {
  set.constraints.clear();
  for (const auto& item : j.at("constraints")) {
    SafetyConstraint c;
    from_json(item, c);
    set.constraints.push_back(std::move(c));
  }
}

void to_json(nlohmann::json& j, const RootCause& r) {
  j = nlohmann::json{
      {"workflow_id", r.workflow_id}, {"causal_steps", r.causal_steps}, {"summary", r.summary}};
}

void from_json(const nlohmann::json& j, RootCause& r) {
  r.workflow_id = j.at("workflow_id").get<std::string>();
  r.causal_steps = j.at("causal_steps").get<std::vector<std::size_t>>();
  r.summary = j.at("summary").get<std::string>();
}

ConstraintSet parse_constraints(const std::string& llm_text) {
  auto array = extract_first_json_array(llm_text);
  if (!array) {
    throw NoStructuredOutput();
  }
  ConstraintSet set;
  std::set<std::string> seen_ids;
  std::size_t index = 0;
  for (const auto& item : *array) {
    if (!item.is_object()) {
      throw InvalidConstraint(index, "not a JSON object");
    }
    if (!item.contains("effect") || !item["effect"].is_string() ||
        item["effect"].get<std::string>() != "deny") {
      throw InvalidConstraint(index, "effect must be \"deny\"");
    }
    SafetyConstraint constraint;
    try {
      from_json(item, constraint);
    } catch (const ValidationError& e) {
      throw InvalidConstraint(index, e.what());
    } catch (const nlohmann::json::exception& e) {
      throw InvalidConstraint(index, e.what());
    }
    if (constraint.constraint_id.empty()) {
      constraint.constraint_id = "c" + std::to_string(index + 1);
    }
    try {
      validate_constraint(constraint);
    } catch (const ValidationError& e) {
      throw InvalidConstraint(index, e.what());
    }
    if (!seen_ids.insert(constraint.constraint_id).second) {
      throw InvalidConstraint(index, "duplicate constraint_id \"" + constraint.constraint_id +
                                         "\"");
    }
    set.constraints.push_back(std::move(constraint));
    ++index;
  }
  return set;
}

namespace {

std::string parent_prefix(const std::string& path) {
  auto slash = path.find_last_of('/');
  if (slash == std::string::npos || slash == 0) {
    return "/";
  }
  return path.substr(0, slash);
}

}  // namespace

ConstraintSet fallback_constraints(const RootCause& root_cause, const OrchestrationPlan& plan,
                                   const VirtualEnv& env, const AgentProfile& profile) {
  // Walk the causal steps from the back looking for one with an environment
  // effect; that step carries the outcome this rule has to block.
  for (auto it = root_cause.causal_steps.rbegin(); it != root_cause.causal_steps.rend(); ++it) {
    if (*it >= plan.steps.size()) continue;
    const ToolInvocation& invocation = plan.steps[*it];
    const ToolAction* action = profile.find_action(invocation.tool, invocation.action);
    if (action == nullptr) continue;

    SafetyConstraint constraint;
    constraint.subject = invocation.tool;
    constraint.action_category = action->effect_category;
    const ResourceArgs resolved = resolve_resource_args(invocation, *action);

    switch (action->effect_category) {
      case EffectCategory::file_write:
        if (!resolved.path) continue;
        constraint.resource = ResourceMatcher{ResourceKind::path_prefix,
                                              parent_prefix(*resolved.path)};
        break;
      case EffectCategory::net_send:
        if (!resolved.endpoint) continue;
        constraint.resource = ResourceMatcher{ResourceKind::endpoint, *resolved.endpoint};
        break;
      case EffectCategory::msg_send:
      case EffectCategory::purchase: {
        const std::string recipient = resolved.recipient.value_or("");
        const bool authorized = recipient.empty() || env.endpoint_authorized(recipient);
        constraint.resource = ResourceMatcher{ResourceKind::recipient_class,
                                              authorized ? "any" : "unauthorized"};
        break;
      }
      case EffectCategory::proc_spawn:
        constraint.resource = ResourceMatcher{ResourceKind::process_name,
                                              resolved_process_name(invocation, *action)};
        break;
      case EffectCategory::file_read:
      case EffectCategory::net_receive:
      case EffectCategory::none:
        continue;  // effect-free; keep looking
    }

    constraint.constraint_id = root_cause.workflow_id + "-fallback-1";
    constraint.rationale = "deny " + to_string(*constraint.action_category) + " by " +
                           invocation.tool + " (causal step " + std::to_string(*it) + ")";
    constraint.provenance = root_cause.workflow_id;
    validate_constraint(constraint);
    return ConstraintSet{{std::move(constraint)}};
  }
  throw NoEffectfulStep("every causal step of workflow \"" + root_cause.workflow_id +
                        "\" is effect-free; no deny template applies");
}

namespace {

std::string sanitize_label(const std::string& value) {
  std::string out;
  for (char c : value) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  if (out.empty()) out = "resource";
  return out + "_t";
}

std::string rule_comment(const SafetyConstraint& c) {
  std::string out = "# " + c.constraint_id + ": deny subject=" + c.subject + " category=" +
                    (c.action_category ? to_string(*c.action_category) : std::string("*"));
  if (c.resource) {
    out += " resource=" + to_string(c.resource->kind) + ":" + c.resource->value;
  }
  if (!c.rationale.empty()) {
    out += " (" + c.rationale + ")";
  }
  return out;
}

}  // namespace

std::map<std::string, std::string> default_label_plan(
    const std::vector<const ConstraintSet*>& sets) {
  std::map<std::string, std::string> plan;
  for (const ConstraintSet* set : sets) {
    if (set == nullptr) continue;
    for (const SafetyConstraint& c : set->constraints) {
      if (c.resource && c.resource->kind == ResourceKind::path_prefix) {
        plan.emplace(c.resource->value, sanitize_label(c.resource->value));
      }
    }
  }
  return plan;
}

std::string render_selinux(const ConstraintSet& constraints,
                           const std::map<std::string, std::string>& label_plan) {
  // Resolve labels first so declarations can precede every use.
  std::set<std::string> labels_used;
  std::map<std::string, std::string> path_bindings;  // path -> label
  for (const SafetyConstraint& c : constraints.constraints) {
    if (!c.resource) continue;
    if (c.resource->kind == ResourceKind::path_prefix) {
      auto entry = label_plan.find(c.resource->value);
      if (entry == label_plan.end()) {
        throw MissingLabel(c.resource->value);
      }
      labels_used.insert(entry->second);
      path_bindings.emplace(c.resource->value, entry->second);
    }
  }

  std::ostringstream out;
  out << "# types\n";
  for (const std::string& label : labels_used) {
    out << "type " << label << ";\n";
  }

  out << "# labels\n";
  for (const auto& [path, label] : path_bindings) {
    out << "semanage fcontext -a -t " << label << " '" << path << "(/.*)?'\n";
    out << "restorecon -R '" << path << "'\n";
  }

  out << "# rules\n";
  for (const SafetyConstraint& c : constraints.constraints) {
    out << rule_comment(c) << "\n";
    const std::string subject_domain = "agent_t";
    std::optional<std::string> label;
    if (c.resource && c.resource->kind == ResourceKind::path_prefix) {
      label = path_bindings.at(c.resource->value);
    }
    if (!c.action_category) {
      if (label) {
        out << "neverallow " << subject_domain << " " << *label
            << ":file { read write create execute };\n";
      } else {
        out << "# (wildcard category; enforced by the sandbox runtime)\n";
      }
      continue;
    }
    switch (*c.action_category) {
      case EffectCategory::file_read:
        out << "neverallow " << subject_domain << " " << (label ? *label : "file_t")
            << ":file { read };\n";
        break;
      case EffectCategory::file_write:
        out << "neverallow " << subject_domain << " " << (label ? *label : "file_t")
            << ":file { write create };\n";
        break;
      case EffectCategory::net_send:
        out << "neverallow " << subject_domain << " port_t:tcp_socket { name_connect };";
        if (c.resource) out << "  # endpoint " << c.resource->value;
        out << "\n";
        break;
      case EffectCategory::net_receive:
        out << "neverallow " << subject_domain << " port_t:tcp_socket { name_bind };";
        if (c.resource) out << "  # endpoint " << c.resource->value;
        out << "\n";
        break;
      case EffectCategory::proc_spawn:
        out << "neverallow " << subject_domain << " bin_t:file { execute };";
        if (c.resource) out << "  # process " << c.resource->value;
        out << "\n";
        break;
      case EffectCategory::msg_send:
        out << "# deny msg_send"
            << (c.resource ? " (" + to_string(c.resource->kind) + ":" + c.resource->value + ")"
                           : std::string())
            << " (no file-system mapping; enforced by the sandbox runtime)\n";
        break;
      case EffectCategory::purchase:
        out << "# deny purchase"
            << (c.resource ? " (" + to_string(c.resource->kind) + ":" + c.resource->value + ")"
                           : std::string())
            << " (no file-system mapping; enforced by the sandbox runtime)\n";
        break;
      case EffectCategory::none:
        out << "# deny no-effect category (nothing to enforce)\n";
        break;
    }
  }
  return out.str();
}

}  // namespace agentguard
