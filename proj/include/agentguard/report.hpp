#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agentguard/pipeline.hpp"
#include "agentguard/policy.hpp"

namespace agentguard {

struct Metrics {
  int workflows_identified = 0;
  int rejected_hallucination = 0;
  int risk_validated = 0;
  int constraints_validated = 0;
  int unsafe_outcomes_before = 0;
  int unsafe_outcomes_after = 0;

  bool operator==(const Metrics&) const = default;
};

struct ScenarioEntry {
  TaskScenario scenario;
  std::string phase1_error;
  std::vector<WorkflowRecord> workflows;

  bool operator==(const ScenarioEntry&) const = default;
};

struct ReportMeta {
  std::string run_id;
  std::string created_at;
  std::string agent_id;
  std::string env_fixture_id;
  ModelConfig model_config;
};

struct EvaluationReport {
  std::string run_id;
  std::string created_at;
  std::string agent_id;
  std::string env_fixture_id;
  ModelConfig model_config;
  std::vector<ScenarioEntry> entries;
  Metrics metrics;

  bool operator==(const EvaluationReport&) const = default;
};

// Metrics derived purely from the entries; assemble and parse both insist the
// stored block matches this recomputation.
Metrics recompute_metrics(const std::vector<ScenarioEntry>& entries);

// Validates per-workflow consistency (status history versus present
// components, counter bounds) and returns the finished report. Violations are
// InconsistentEntry.
EvaluationReport assemble_report(const ReportMeta& meta, std::vector<ScenarioEntry> entries);

std::string serialize_report(const EvaluationReport& report);

// Strict parse of a serialized report. Structural violations raise SchemaError
// carrying a JSON pointer to the offending location; consistency violations
// raise InconsistentEntry.
EvaluationReport parse_report(const std::string& text);

std::string render_markdown(const EvaluationReport& report);

// Label plan covering every validated constraint set in the report.
LabelPlan report_label_plan(const EvaluationReport& report);

// Concatenated policy renders for workflows with validated constraints,
// ordered by workflow id. Empty string when nothing validated.
std::string export_selinux_bundle(const EvaluationReport& report, const LabelPlan& labels);

}  // namespace agentguard
