#include "agentguard/report.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <utility>

#include "agentguard/errors.hpp"
#include "agentguard/json_util.hpp"

namespace agentguard {
namespace {

bool history_reached_validation(const UnsafeWorkflow& w) {
  return w.history_contains(WorkflowStatus::test_generated) ||
         w.history_contains(WorkflowStatus::risk_validated) ||
         w.history_contains(WorkflowStatus::risk_not_reproduced);
}

void check_entry(const WorkflowRecord& record) {
  const UnsafeWorkflow& w = record.workflow;
  auto fail = [&](const std::string& reason) {
    throw InconsistentEntry("workflow " + w.workflow_id + ": " + reason);
  };
  if (w.workflow_id.empty()) throw InconsistentEntry("workflow with empty id");
  if (w.history.empty()) fail("status history is empty");
  if (w.history.front().status != WorkflowStatus::identified) {
    fail("status history must start at identified");
  }
  if (w.history.back().status != w.status) {
    fail("status does not match the last history event");
  }
  for (std::size_t i = 1; i < w.history.size(); ++i) {
    if (is_terminal(w.history[i - 1].status)) {
      fail("terminal status " + to_string(w.history[i - 1].status) + " has a successor");
    }
    if (static_cast<int>(w.history[i].status) <= static_cast<int>(w.history[i - 1].status)) {
      fail("status history is not strictly forward");
    }
  }
  bool rejected = w.status == WorkflowStatus::rejected_hallucination;
  if (rejected && w.hallucination_evidence.empty()) {
    fail("rejected as hallucination without naming unknown tools");
  }
  if (!rejected && !w.hallucination_evidence.empty()) {
    fail("hallucination evidence on a non-rejected workflow");
  }
  bool has_test = w.history_contains(WorkflowStatus::test_generated);
  if (record.test_case.has_value() != has_test) {
    fail(has_test ? "history reached test_generated but no test case is recorded"
                  : "test case recorded without reaching test_generated");
  }
  if (record.test_case && record.test_case->workflow_id != w.workflow_id) {
    fail("test case belongs to workflow " + record.test_case->workflow_id);
  }
  if (record.execution.has_value() != record.test_case.has_value()) {
    fail("execution record and test case must be present together");
  }
  if (record.detection && !record.execution) {
    fail("detection result without an execution record");
  }
  if (w.history_contains(WorkflowStatus::risk_validated)) {
    if (!record.detection || !record.detection->triggered) {
      fail("risk_validated requires a triggered detection result");
    }
  }
  bool hardened = w.history_contains(WorkflowStatus::constraints_proposed) ||
                  w.history_contains(WorkflowStatus::constraints_validated) ||
                  w.history_contains(WorkflowStatus::constraints_failed);
  if (hardened && !w.history_contains(WorkflowStatus::risk_validated)) {
    fail("hardening statuses require risk_validated in the history");
  }
  bool has_constraints =
      w.history_contains(WorkflowStatus::constraints_proposed);
  if (record.constraints.has_value() != has_constraints) {
    fail(has_constraints ? "history reached constraints_proposed but no constraints are recorded"
                         : "constraints recorded without reaching constraints_proposed");
  }
  if (record.unsafe_before.has_value() != history_reached_validation(w)) {
    fail("unsafe_before must be present exactly when validation ran");
  }
  if (record.unsafe_before) {
    int expected = w.history_contains(WorkflowStatus::risk_validated) ? 1 : 0;
    if (*record.unsafe_before != expected) {
      fail("unsafe_before must be " + std::to_string(expected) + " for this history");
    }
  }
  bool after_expected = w.status == WorkflowStatus::constraints_validated ||
                        w.status == WorkflowStatus::constraints_failed;
  if (record.unsafe_after.has_value() != after_expected) {
    fail("unsafe_after must be present exactly when hardening concluded");
  }
  if (record.unsafe_after) {
    int expected = w.status == WorkflowStatus::constraints_validated ? 0 : 1;
    if (*record.unsafe_after != expected) {
      fail("unsafe_after must be " + std::to_string(expected) + " for status " +
           to_string(w.status));
    }
  }
}

const nlohmann::json& require_field(const nlohmann::json& j, const std::string& pointer,
                                    const char* key) {
  if (!j.is_object()) {
    throw SchemaError(pointer.empty() ? "/" : pointer, "expected an object");
  }
  if (!j.contains(key)) {
    throw SchemaError(pointer + "/" + key, "missing required field");
  }
  return j.at(key);
}

std::string require_string(const nlohmann::json& j, const std::string& pointer, const char* key) {
  const nlohmann::json& value = require_field(j, pointer, key);
  if (!value.is_string()) {
    throw SchemaError(pointer + "/" + key, "expected a string");
  }
  return value.get<std::string>();
}

int require_int(const nlohmann::json& j, const std::string& pointer, const char* key) {
  const nlohmann::json& value = require_field(j, pointer, key);
  if (!value.is_number_integer()) {
    throw SchemaError(pointer + "/" + key, "expected an integer");
  }
  return value.get<int>();
}

std::string describe(const SafetyConstraint& c) {
  std::string text = "deny ";
  text += c.action_category ? to_string(*c.action_category) : std::string("*");
  text += " by " + c.subject;
  if (c.resource) {
    text += " on " + to_string(c.resource->kind) + " " + c.resource->value;
  }
  if (!c.rationale.empty()) text += " (" + c.rationale + ")";
  return text;
}

std::string format_temperature(double value) {
  std::ostringstream out;
  out << value;
  return out.str();
}

}  // namespace

Metrics recompute_metrics(const std::vector<ScenarioEntry>& entries) {
  Metrics metrics;
  for (const ScenarioEntry& entry : entries) {
    for (const WorkflowRecord& record : entry.workflows) {
      const UnsafeWorkflow& w = record.workflow;
      if (w.status == WorkflowStatus::rejected_hallucination) {
        ++metrics.rejected_hallucination;
      } else {
        ++metrics.workflows_identified;
      }
      if (w.history_contains(WorkflowStatus::risk_validated)) ++metrics.risk_validated;
      if (w.status == WorkflowStatus::constraints_validated) ++metrics.constraints_validated;
      metrics.unsafe_outcomes_before += record.unsafe_before.value_or(0);
      metrics.unsafe_outcomes_after += record.unsafe_after.value_or(0);
    }
  }
  return metrics;
}

EvaluationReport assemble_report(const ReportMeta& meta, std::vector<ScenarioEntry> entries) {
  if (meta.run_id.empty()) throw InconsistentEntry("run_id is empty");
  if (meta.agent_id.empty()) throw InconsistentEntry("agent_id is empty");
  std::set<std::string> scenario_ids;
  std::set<std::string> workflow_ids;
  for (const ScenarioEntry& entry : entries) {
    if (!scenario_ids.insert(entry.scenario.scenario_id).second) {
      throw InconsistentEntry("duplicate scenario " + entry.scenario.scenario_id);
    }
    for (const WorkflowRecord& record : entry.workflows) {
      if (!workflow_ids.insert(record.workflow.workflow_id).second) {
        throw InconsistentEntry("duplicate workflow " + record.workflow.workflow_id);
      }
      if (record.workflow.scenario.scenario_id != entry.scenario.scenario_id) {
        throw InconsistentEntry("workflow " + record.workflow.workflow_id +
                                " is filed under scenario " + entry.scenario.scenario_id +
                                " but belongs to " + record.workflow.scenario.scenario_id);
      }
      check_entry(record);
    }
  }
  EvaluationReport report;
  report.run_id = meta.run_id;
  report.created_at = meta.created_at;
  report.agent_id = meta.agent_id;
  report.env_fixture_id = meta.env_fixture_id;
  report.model_config = meta.model_config;
  report.entries = std::move(entries);
  report.metrics = recompute_metrics(report.entries);
  if (report.metrics.unsafe_outcomes_after > report.metrics.unsafe_outcomes_before) {
    throw InconsistentEntry("unsafe outcomes may not increase across hardening");
  }
  return report;
}

std::string serialize_report(const EvaluationReport& report) {
  nlohmann::json metrics{
      {"workflows_identified", report.metrics.workflows_identified},
      {"rejected_hallucination", report.metrics.rejected_hallucination},
      {"risk_validated", report.metrics.risk_validated},
      {"constraints_validated", report.metrics.constraints_validated},
      {"unsafe_outcomes_before", report.metrics.unsafe_outcomes_before},
      {"unsafe_outcomes_after", report.metrics.unsafe_outcomes_after},
  };
  nlohmann::json entries = nlohmann::json::array();
  for (const ScenarioEntry& entry : report.entries) {
    entries.push_back(nlohmann::json{{"scenario", entry.scenario},
                                     {"phase1_error", entry.phase1_error},
                                     {"workflows", entry.workflows}});
  }
  nlohmann::json j{
      {"run_id", report.run_id},
      {"created_at", report.created_at},
      {"agent_id", report.agent_id},
      {"env_fixture_id", report.env_fixture_id},
      {"model_config", report.model_config},
      {"entries", std::move(entries)},
      {"metrics", std::move(metrics)},
  };
  return j.dump(2) + "\n";
}

EvaluationReport parse_report(const std::string& text) {
  nlohmann::json j = parse_json(text, "report");
  if (!j.is_object()) throw SchemaError("/", "report must be a JSON object");
  ReportMeta meta;
  meta.run_id = require_string(j, "", "run_id");
  meta.created_at = require_string(j, "", "created_at");
  meta.agent_id = require_string(j, "", "agent_id");
  meta.env_fixture_id = require_string(j, "", "env_fixture_id");
  try {
    meta.model_config = require_field(j, "", "model_config").get<ModelConfig>();
  } catch (const SchemaError&) {
    throw;
  } catch (const std::exception& e) {
    throw SchemaError("/model_config", e.what());
  }
  const nlohmann::json& entries_json = require_field(j, "", "entries");
  if (!entries_json.is_array()) throw SchemaError("/entries", "expected an array");
  std::vector<ScenarioEntry> entries;
  for (std::size_t i = 0; i < entries_json.size(); ++i) {
    const nlohmann::json& entry_json = entries_json[i];
    std::string pointer = "/entries/" + std::to_string(i);
    ScenarioEntry entry;
    try {
      entry.scenario = require_field(entry_json, pointer, "scenario").get<TaskScenario>();
    } catch (const SchemaError&) {
      throw;
    } catch (const std::exception& e) {
      throw SchemaError(pointer + "/scenario", e.what());
    }
    entry.phase1_error = require_string(entry_json, pointer, "phase1_error");
    const nlohmann::json& workflows = require_field(entry_json, pointer, "workflows");
    if (!workflows.is_array()) throw SchemaError(pointer + "/workflows", "expected an array");
    for (std::size_t k = 0; k < workflows.size(); ++k) {
      try {
        entry.workflows.push_back(workflows[k].get<WorkflowRecord>());
      } catch (const std::exception& e) {
        throw SchemaError(pointer + "/workflows/" + std::to_string(k), e.what());
      }
    }
    entries.push_back(std::move(entry));
  }
  const nlohmann::json& metrics_json = require_field(j, "", "metrics");
  Metrics stored;
  stored.workflows_identified = require_int(metrics_json, "/metrics", "workflows_identified");
  stored.rejected_hallucination = require_int(metrics_json, "/metrics", "rejected_hallucination");
  stored.risk_validated = require_int(metrics_json, "/metrics", "risk_validated");
  stored.constraints_validated = require_int(metrics_json, "/metrics", "constraints_validated");
  stored.unsafe_outcomes_before = require_int(metrics_json, "/metrics", "unsafe_outcomes_before");
  stored.unsafe_outcomes_after = require_int(metrics_json, "/metrics", "unsafe_outcomes_after");
  EvaluationReport report = assemble_report(meta, std::move(entries));
  if (!(report.metrics == stored)) {
    throw InconsistentEntry("stored metrics do not match recomputation from the entries");
  }
  return report;
}

std::string render_markdown(const EvaluationReport& report) {
  std::ostringstream out;
  out << "# Agent safety evaluation: " << report.run_id << "\n\n";
  out << "- agent: " << report.agent_id << "\n";
  out << "- environment: " << report.env_fixture_id << "\n";
  out << "- created: " << report.created_at << "\n";
  out << "- model: " << report.model_config.provider << "/" << report.model_config.model
      << " (temperature " << format_temperature(report.model_config.temperature) << ")\n\n";
  out << "## Metrics\n\n";
  out << "| metric | value |\n";
  out << "| --- | --- |\n";
  out << "| workflows identified | " << report.metrics.workflows_identified << " |\n";
  out << "| rejected as hallucination | " << report.metrics.rejected_hallucination << " |\n";
  out << "| risks validated | " << report.metrics.risk_validated << " |\n";
  out << "| constraints validated | " << report.metrics.constraints_validated << " |\n";
  out << "| unsafe outcomes before hardening | " << report.metrics.unsafe_outcomes_before
      << " |\n";
  out << "| unsafe outcomes after hardening | " << report.metrics.unsafe_outcomes_after
      << " |\n\n";
  out << "## Scenarios\n";
  for (const ScenarioEntry& entry : report.entries) {
    out << "\n### " << entry.scenario.scenario_id << ": " << entry.scenario.description << "\n";
    if (!entry.phase1_error.empty()) {
      out << "\nIdentification failed: " << entry.phase1_error << "\n";
    }
    if (entry.workflows.empty() && entry.phase1_error.empty()) {
      out << "\nNo unsafe workflows were identified.\n";
    }
    for (const WorkflowRecord& record : entry.workflows) {
      const UnsafeWorkflow& w = record.workflow;
      out << "\n#### " << w.workflow_id << " (" << to_string(w.status) << ")\n\n";
      out << "- description: " << w.description << "\n";
      out << "- tools: ";
      for (std::size_t i = 0; i < w.tool_sequence.size(); ++i) {
        if (i > 0) out << ", ";
        out << w.tool_sequence[i];
      }
      out << "\n";
      if (!w.expected_risks.empty()) out << "- expected risks: " << w.expected_risks << "\n";
      if (!w.violated_principles.empty()) {
        out << "- violated principles: ";
        for (std::size_t i = 0; i < w.violated_principles.size(); ++i) {
          if (i > 0) out << ", ";
          out << to_string(w.violated_principles[i]);
        }
        out << "\n";
      }
      if (!w.hallucination_evidence.empty()) {
        out << "- unknown tools: ";
        for (std::size_t i = 0; i < w.hallucination_evidence.size(); ++i) {
          if (i > 0) out << ", ";
          out << w.hallucination_evidence[i];
        }
        out << "\n";
      }
      if (record.detection) {
        out << "- detector " << record.detection->detector_id << ": "
            << (record.detection->triggered ? "triggered (" + record.detection->evidence + ")"
                                            : "not triggered")
            << "\n";
      }
      if (record.unsafe_before) {
        out << "- unsafe outcomes: " << *record.unsafe_before << " before";
        if (record.unsafe_after) out << ", " << *record.unsafe_after << " after hardening";
        out << "\n";
      }
      if (record.constraints) {
        out << "- constraints:\n";
        for (const SafetyConstraint& c : record.constraints->constraints) {
          out << "  - " << c.constraint_id << ": " << describe(c) << "\n";
        }
      }
      out << "- history:\n";
      for (const StatusEvent& event : w.history) {
        out << "  - " << to_string(event.status) << " at " << event.at << ": " << event.reason
            << "\n";
      }
    }
  }
  return out.str();
}

LabelPlan report_label_plan(const EvaluationReport& report) {
  std::vector<const ConstraintSet*> sets;
  for (const ScenarioEntry& entry : report.entries) {
    for (const WorkflowRecord& record : entry.workflows) {
      if (record.workflow.status == WorkflowStatus::constraints_validated && record.constraints) {
        sets.push_back(&*record.constraints);
      }
    }
  }
  return default_label_plan(sets);
}

std::string export_selinux_bundle(const EvaluationReport& report, const LabelPlan& labels) {
  std::vector<std::pair<std::string, const ConstraintSet*>> validated;
  for (const ScenarioEntry& entry : report.entries) {
    for (const WorkflowRecord& record : entry.workflows) {
      if (record.workflow.status == WorkflowStatus::constraints_validated && record.constraints) {
        validated.emplace_back(record.workflow.workflow_id, &*record.constraints);
      }
    }
  }
  std::sort(validated.begin(), validated.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out;
  for (std::size_t i = 0; i < validated.size(); ++i) {
    if (i > 0) out += "\n";
    out += "# workflow " + validated[i].first + "\n";
    out += render_selinux(*validated[i].second, labels);
  }
  return out;
}

}  // namespace agentguard
