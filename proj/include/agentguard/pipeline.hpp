#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agentguard/agent_model.hpp"
#include "agentguard/llm_gateway.hpp"
#include "agentguard/policy.hpp"
#include "agentguard/prompt_engine.hpp"
#include "agentguard/sandbox.hpp"

namespace agentguard {

struct EvaluationReport;  // report.hpp

// Lifecycle of a candidate unsafe workflow. Transitions only move forward in
// this order; rejection and failure states are terminal.
enum class WorkflowStatus {
  identified,
  rejected_hallucination,
  test_generated,
  risk_validated,
  risk_not_reproduced,
  constraints_proposed,
  constraints_validated,
  constraints_failed,
};

std::string to_string(WorkflowStatus status);
std::optional<WorkflowStatus> workflow_status_from_string(const std::string& value);
bool is_terminal(WorkflowStatus status);

enum class Principle { confidentiality, integrity, availability, least_privilege, authorization };

std::string to_string(Principle principle);
std::optional<Principle> principle_from_string(const std::string& value);

struct StatusEvent {
  WorkflowStatus status = WorkflowStatus::identified;
  std::string reason;
  std::string at;  // RFC 3339 UTC

  bool operator==(const StatusEvent&) const = default;
};

struct UnsafeWorkflow {
  std::string workflow_id;
  TaskScenario scenario;
  std::string description;
  std::vector<std::string> tool_sequence;
  std::string expected_risks;
  std::vector<Principle> violated_principles;
  WorkflowStatus status = WorkflowStatus::identified;
  std::vector<StatusEvent> history;
  std::vector<std::string> hallucination_evidence;  // unknown tool names when rejected

  bool history_contains(WorkflowStatus s) const;

  bool operator==(const UnsafeWorkflow&) const = default;
};

// Appends a status event, enforcing forward-only transitions out of
// non-terminal states. Violations are std::logic_error: they indicate a driver
// bug, not bad input.
void advance_status(UnsafeWorkflow& workflow, WorkflowStatus status, const std::string& reason,
                    const std::string& at);

struct TestCase {
  std::string workflow_id;
  OrchestrationPlan plan;
  OutcomeDetector detector;
  std::string env_fixture_id;

  bool operator==(const TestCase&) const = default;
};

// Detector kinds plausible for a workflow's violated principles; used as a
// structural review gate on generated test cases. Workflows without principle
// annotations accept any kind.
bool detector_compatible(DetectorKind kind, const std::vector<Principle>& principles);

struct ProviderSettings {
  enum class Kind { scripted, remote };
  Kind kind = Kind::scripted;
  std::string script_path;
  std::string endpoint;
  std::string model;
};

struct RunConfig {
  std::string profile_path;
  std::string scenarios_path;
  std::string env_path;
  std::string templates_path;  // empty: use the bundled templates directory
  std::string out_dir = "agentguard-out";
  ProviderSettings provider;
  std::optional<ProviderSettings> expert_provider;  // defaults to `provider`
  double temperature = 0.0;
  int max_tokens = 4096;
  LoopConfig loops;
  bool halt_on_deny = false;
  int max_workflows = 3;  // workflows requested per scenario in phase 1
  bool jailbreak_preamble = false;
  bool deterministic = false;
  std::string run_id;  // empty: derived from the profile's agent_id
  RetryPolicy retry;
};

struct ModelConfig {
  std::string provider;  // "scripted" | "remote"
  std::string model;
  double temperature = 0.0;

  bool operator==(const ModelConfig&) const = default;
};

// Per-step execution summary kept in run artifacts and reports; the full
// invocation arguments live in the recorded plan.
struct StepSummary {
  std::string tool;
  std::string action;
  StepStatus status = StepStatus::ok;
  std::string constraint_id;
  std::string error;

  bool operator==(const StepSummary&) const = default;
};

struct ExecutionSummary {
  std::string plan_id;
  std::string initial_env_digest;
  std::string final_env_digest;
  std::vector<StepSummary> steps;

  static ExecutionSummary from(const ExecutionRecord& record);

  bool operator==(const ExecutionSummary&) const = default;
};

// Everything accumulated about one workflow across the four phases. Optional
// components are present exactly when the producing phase ran to the point of
// creating them.
struct WorkflowRecord {
  UnsafeWorkflow workflow;
  std::optional<TestCase> test_case;
  std::optional<ExecutionSummary> execution;
  std::optional<DetectionResult> detection;
  std::optional<ConstraintSet> constraints;
  std::optional<int> unsafe_before;
  std::optional<int> unsafe_after;

  bool operator==(const WorkflowRecord&) const = default;
};

struct ScenarioState {
  TaskScenario scenario;
  std::string phase1_error;  // set when phase 1 failed for this scenario

  bool operator==(const ScenarioState&) const = default;
};

// Snapshot of a run between phases; the phase artifact files serialize this.
struct RunState {
  std::string run_id;
  std::string agent_id;
  std::string env_fixture_id;
  ModelConfig model_config;
  std::vector<ScenarioState> scenarios;
  std::vector<WorkflowRecord> workflows;

  bool operator==(const RunState&) const = default;
};

void to_json(nlohmann::json& j, const StatusEvent& e);
void from_json(const nlohmann::json& j, StatusEvent& e);
void to_json(nlohmann::json& j, const UnsafeWorkflow& w);
void from_json(const nlohmann::json& j, UnsafeWorkflow& w);
void to_json(nlohmann::json& j, const TestCase& t);
void from_json(const nlohmann::json& j, TestCase& t);
void to_json(nlohmann::json& j, const ModelConfig& m);
void from_json(const nlohmann::json& j, ModelConfig& m);
void to_json(nlohmann::json& j, const ExecutionSummary& s);
void from_json(const nlohmann::json& j, ExecutionSummary& s);
void to_json(nlohmann::json& j, const WorkflowRecord& r);
void from_json(const nlohmann::json& j, WorkflowRecord& r);
void to_json(nlohmann::json& j, const RunState& s);
void from_json(const nlohmann::json& j, RunState& s);

// Loaded inputs plus providers for one run. Templates resolve to the bundled
// directory unless the config names another one.
class PipelineSession {
 public:
  static PipelineSession open(const RunConfig& config);

  const RunConfig& config() const { return config_; }
  const AgentProfile& profile() const { return profile_; }
  const std::vector<TaskScenario>& scenarios() const { return scenarios_; }
  const EnvFixture& fixture() const { return fixture_; }
  const TemplateLibrary& templates() const { return templates_; }
  CompletionProvider& orchestrator() const { return *orchestrator_; }
  CompletionProvider& expert() const { return *expert_; }

  // Timestamp source; fixed at the epoch in deterministic mode.
  std::string now() const;

 private:
  RunConfig config_;
  AgentProfile profile_;
  std::vector<TaskScenario> scenarios_;
  EnvFixture fixture_;
  TemplateLibrary templates_;
  std::shared_ptr<CompletionProvider> orchestrator_;
  std::shared_ptr<CompletionProvider> expert_;
};

struct IdentifyResult {
  std::vector<ScenarioState> scenarios;
  std::vector<UnsafeWorkflow> workflows;
};

// Phase 1: prompts the orchestrator per scenario (role augmentation plus a
// tool-reflection preface), parses the returned workflow list, and partitions
// referenced tools against the profile. Workflows naming unknown tools are
// rejected as hallucinations with the tools recorded as evidence. A scenario
// whose output stays unparsable through the review loop is marked failed and
// the run continues.
IdentifyResult identify_unsafe_workflows(const PipelineSession& session);

struct ValidationOutcome {
  std::optional<TestCase> test_case;
  std::optional<ExecutionRecord> execution;
  std::optional<DetectionResult> detection;
};

// Phase 2: generates a test case through the quality-control loop, repairs
// execution errors through the repair loop, then executes the plan without
// constraints and applies the detector. Advances the workflow to
// risk_validated or risk_not_reproduced.
ValidationOutcome validate_workflow(const PipelineSession& session, UnsafeWorkflow& workflow);

// Phase 3: root-cause analysis plus expert constraint generation with repair;
// falls back to the deterministic deny template when repair is exhausted.
// Advances to constraints_proposed. NoEffectfulStep and provider failures
// propagate for the caller to record as constraints_failed.
ConstraintSet harden_workflow(const PipelineSession& session, UnsafeWorkflow& workflow,
                              const TestCase& test_case, const ExecutionRecord& record,
                              const DetectionResult& detection);

struct VerifyResult {
  bool validated = false;
  DetectionResult detection;
  int denied_steps = 0;
};

// Phase 4: replays the recorded plan (never regenerated) under the proposed
// constraints on a fresh environment clone. Success requires an untriggered
// detector plus at least one denied step. Advances to constraints_validated or
// constraints_failed.
VerifyResult verify_constraints(const PipelineSession& session, UnsafeWorkflow& workflow,
                                const TestCase& test_case, const ConstraintSet& constraints);

// Phase drivers mutating a run snapshot. run_evaluation chains all four and
// assembles the report; a partial failure in any workflow or scenario is
// recorded and never aborts the run.
RunState run_phase_identify(const PipelineSession& session);
void run_phase_validate(const PipelineSession& session, RunState& state);
void run_phase_harden(const PipelineSession& session, RunState& state);
void run_phase_verify(const PipelineSession& session, RunState& state);

EvaluationReport report_from_state(const PipelineSession& session, const RunState& state);
EvaluationReport run_evaluation(const RunConfig& config);

}  // namespace agentguard
