#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agentguard/agent_model.hpp"

namespace agentguard {

struct ConstraintSet;  // policy.hpp

struct FileState {
  std::string content;
  std::set<std::string> labels;
  bool writable = true;

  bool operator==(const FileState&) const = default;
};

struct EndpointState {
  bool authorized = false;

  bool operator==(const EndpointState&) const = default;
};

struct ProcessRecord {
  std::string name;

  bool operator==(const ProcessRecord&) const = default;
};

struct OutboxEntry {
  std::string recipient;
  std::string payload;
  bool recipient_authorized = false;
  bool purchase = false;

  bool operator==(const OutboxEntry&) const = default;
};

struct EgressEntry {
  std::string endpoint;
  std::string payload;

  bool operator==(const EgressEntry&) const = default;
};

// In-memory world the sandbox executes against. File paths are absolute and
// normalized. The net map doubles as the authorization directory for message
// recipients; names absent from it count as unauthorized. Process, outbox and
// egress records only ever grow during execution.
struct VirtualEnv {
  std::map<std::string, FileState> fs;
  std::map<std::string, EndpointState> net;
  std::vector<ProcessRecord> processes;
  std::vector<OutboxEntry> outbox;
  std::vector<EgressEntry> egress_log;

  bool endpoint_authorized(const std::string& name) const;

  bool operator==(const VirtualEnv&) const = default;
};

struct EnvFixture {
  std::string env_id;
  VirtualEnv env;
};

// Hash of the canonical (key-sorted) serialization; equal digests mean equal
// environments for all states this sandbox can produce.
std::string env_digest(const VirtualEnv& env);

// Lexical normalization: absolute, no "." or ".." segments, no trailing or
// doubled separators. Returns nullopt for relative paths and paths escaping
// the root.
std::optional<std::string> normalize_path(const std::string& path);

struct ToolInvocation {
  std::string tool;
  std::string action;
  std::map<std::string, std::string> args;

  bool operator==(const ToolInvocation&) const = default;
};

struct OrchestrationPlan {
  std::string plan_id;
  std::vector<ToolInvocation> steps;

  bool operator==(const OrchestrationPlan&) const = default;
};

enum class DetectorKind {
  file_modified_under,
  sensitive_data_egressed,
  message_sent_unauthorized,
  process_spawned,
  purchase_placed,
};

std::string to_string(DetectorKind kind);
std::optional<DetectorKind> detector_kind_from_string(const std::string& value);

struct OutcomeDetector {
  std::string detector_id;
  DetectorKind kind = DetectorKind::file_modified_under;
  std::map<std::string, std::string> params;

  bool operator==(const OutcomeDetector&) const = default;
};

// Throws ValidationError when required params are missing or malformed
// (file_modified_under needs an absolute path_prefix, sensitive_data_egressed
// a label, process_spawned a name).
void validate_detector(const OutcomeDetector& detector);

enum class StepStatus { ok, denied, tool_error };

std::string to_string(StepStatus status);
std::optional<StepStatus> step_status_from_string(const std::string& value);

struct StepResult {
  ToolInvocation invocation;
  StepStatus status = StepStatus::ok;
  std::string constraint_id;  // set when denied
  std::string error;          // set on tool_error

  bool operator==(const StepResult&) const = default;
};

struct ExecutionRecord {
  std::string plan_id;
  std::vector<StepResult> step_results;
  std::string initial_env_digest;
  std::string final_env_digest;

  bool operator==(const ExecutionRecord&) const = default;
};

struct DetectionResult {
  std::string detector_id;
  bool triggered = false;
  std::string evidence;

  bool operator==(const DetectionResult&) const = default;
};

struct ExecutionResult {
  ExecutionRecord record;
  VirtualEnv env;  // environment after execution
};

// Invocation argument values resolved by declared parameter kind, used both by
// effect application and by constraint matching so the two always agree.
struct ResourceArgs {
  std::optional<std::string> path;      // normalized
  std::optional<std::string> endpoint;
  std::optional<std::string> recipient;
  std::optional<std::string> payload;   // first text/bytes parameter
};

ResourceArgs resolve_resource_args(const ToolInvocation& invocation, const ToolAction& action);

// Process name recorded for a proc_spawn invocation: the first text parameter,
// else the first declared parameter, else the action name.
std::string resolved_process_name(const ToolInvocation& invocation, const ToolAction& action);

// Executes the plan on a copy of `env`, leaving the input untouched. Steps
// referencing undeclared tools/actions or missing/mistyped arguments are
// recorded as tool_error and execution continues. When a constraint set is
// given each well-formed invocation is checked before its effect is applied;
// denied steps leave the environment untouched. halt_on_deny stops at the
// first denial.
ExecutionResult execute_plan(const OrchestrationPlan& plan, const VirtualEnv& env,
                             const AgentProfile& profile,
                             const ConstraintSet* constraints = nullptr,
                             bool halt_on_deny = false);

// Decides whether the unsafe outcome occurred by comparing the environment
// before and after execution. Total: any detector can be evaluated against
// any record. Evidence is non-empty exactly when triggered.
DetectionResult detect(const OutcomeDetector& detector, const ExecutionRecord& record,
                       const VirtualEnv& before, const VirtualEnv& after);

void to_json(nlohmann::json& j, const VirtualEnv& env);
void to_json(nlohmann::json& j, const ToolInvocation& inv);
void from_json(const nlohmann::json& j, ToolInvocation& inv);
void to_json(nlohmann::json& j, const OrchestrationPlan& plan);
void to_json(nlohmann::json& j, const OutcomeDetector& detector);
void to_json(nlohmann::json& j, const DetectionResult& result);
void from_json(const nlohmann::json& j, DetectionResult& result);

// Fixture loading. The document shape is {"env_id": ..., "fs": {path -> {content,
// labels, writable}}, "net": {endpoint -> {authorized}}}; outbox and process
// lists must start empty.
EnvFixture load_env_fixture(const std::string& document);
EnvFixture load_env_fixture_file(const std::filesystem::path& path);

OrchestrationPlan parse_plan(const nlohmann::json& j);
OutcomeDetector parse_detector(const nlohmann::json& j);
nlohmann::json plan_to_json(const OrchestrationPlan& plan);
nlohmann::json detector_to_json(const OutcomeDetector& detector);

}  // namespace agentguard
