#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agentguard/agent_model.hpp"
#include "agentguard/sandbox.hpp"

namespace agentguard {

enum class ResourceKind { path_prefix, endpoint, recipient_class, process_name };

std::string to_string(ResourceKind kind);
std::optional<ResourceKind> resource_kind_from_string(const std::string& value);

// Resource side of a constraint. Values by kind: path_prefix holds an absolute
// normalized path, endpoint an endpoint name or "*", recipient_class either
// "unauthorized" or "any", process_name a substring the spawned command must
// contain.
struct ResourceMatcher {
  ResourceKind kind = ResourceKind::path_prefix;
  std::string value;

  bool operator==(const ResourceMatcher&) const = default;
};

// Deny rule over (subject tool, action category, resource). "*" subject and
// absent category/resource act as wildcards; at least one of the three must
// constrain something, rules that match everything are invalid.
struct SafetyConstraint {
  std::string constraint_id;
  std::string subject = "*";
  std::optional<EffectCategory> action_category;
  std::optional<ResourceMatcher> resource;
  std::string rationale;
  std::string provenance;

  bool operator==(const SafetyConstraint&) const = default;
};

// Throws ValidationError describing the defect: all-wildcard rules, resource
// kinds incompatible with the action category, malformed matcher values.
void validate_constraint(const SafetyConstraint& constraint);

struct ConstraintSet {
  std::vector<SafetyConstraint> constraints;

  bool empty() const { return constraints.empty(); }
  std::size_t size() const { return constraints.size(); }

  bool operator==(const ConstraintSet&) const = default;
};

struct CheckResult {
  bool denied = false;
  std::string constraint_id;
};

// First-match-wins deny check. The environment supplies recipient
// authorization for recipient_class matchers. Invocations not matched by any
// rule are allowed; the sandbox is default-allow.
CheckResult check(const ConstraintSet& constraints, const ToolInvocation& invocation,
                  const ToolAction& action, const VirtualEnv& env);

struct RootCause {
  std::string workflow_id;
  std::vector<std::size_t> causal_steps;  // indices into the analyzed plan
  std::string summary;

  bool operator==(const RootCause&) const = default;
};

// Finds a minimal triggering subsequence of the plan by replaying candidate
// subsequences on fresh copies of `env`. Plans of up to six steps are searched
// exhaustively in order of increasing subset size (lexicographic within one
// size), so the result is globally size-minimal; longer plans fall back to
// greedy single-step removal down to a local minimum. Throws NotReproducible
// when the full plan does not trigger the detector.
RootCause analyze_root_cause(const OrchestrationPlan& plan, const VirtualEnv& env,
                             const OutcomeDetector& detector, const AgentProfile& profile,
                             const std::string& workflow_id = "");

// Extracts the first JSON array from free-form model output and validates each
// element against the constraint schema. Throws NoStructuredOutput when no
// array parses, InvalidConstraint(index, reason) for schema violations.
ConstraintSet parse_constraints(const std::string& llm_text);

// Deterministic template instantiation for the last effectful causal step:
// deny its (tool, category) with the concrete resource generalized to a
// matcher (file path -> parent directory prefix, endpoint -> exact, recipient
// -> authorization class, process -> recorded name). Throws NoEffectfulStep
// when every causal step is effect-free.
ConstraintSet fallback_constraints(const RootCause& root_cause, const OrchestrationPlan& plan,
                                   const VirtualEnv& env, const AgentProfile& profile);

// Renders a constraint set onto SELinux idioms: custom type declarations
// first, then file-context bindings, then enforcement rules, under "# types" /
// "# labels" / "# rules" section headers. label_plan maps resource values to
// type labels; every path resource must be covered or MissingLabel is thrown.
// Rules with no file-system mapping are emitted as sandbox-enforced comments.
using LabelPlan = std::map<std::string, std::string>;

std::string render_selinux(const ConstraintSet& constraints, const LabelPlan& label_plan);

// Derives a label plan covering every path resource in the given sets, naming
// labels after the path (e.g. /workspace/restricted -> workspace_restricted_t).
LabelPlan default_label_plan(const std::vector<const ConstraintSet*>& sets);

void to_json(nlohmann::json& j, const SafetyConstraint& c);
void from_json(const nlohmann::json& j, SafetyConstraint& c);
void to_json(nlohmann::json& j, const ConstraintSet& set);
void from_json(const nlohmann::json& j, ConstraintSet& set);
void to_json(nlohmann::json& j, const RootCause& r);
void from_json(const nlohmann::json& j, RootCause& r);

}  // namespace agentguard
