#include <optional>
#include <string>

#include <nlohmann/json.hpp>
#include <pybind11/pybind11.h>

#include "agentguard/agent_model.hpp"
#include "agentguard/cli_app.hpp"
#include "agentguard/errors.hpp"
#include "agentguard/json_util.hpp"
#include "agentguard/pipeline.hpp"
#include "agentguard/policy.hpp"
#include "agentguard/report.hpp"
#include "agentguard/sandbox.hpp"

namespace py = pybind11;

namespace {

// Every entry point speaks JSON strings so the Python side stays a thin shim
// over the documented file formats instead of mirroring the C++ structs.

agentguard::AgentProfile profile_from(const std::string& document) {
  return agentguard::load_profile(document);
}

agentguard::EnvFixture fixture_from(const std::string& document) {
  return agentguard::load_env_fixture(document);
}

agentguard::OrchestrationPlan plan_from(const std::string& document) {
  return agentguard::parse_plan(agentguard::parse_json(document, "plan"));
}

agentguard::OutcomeDetector detector_from(const std::string& document) {
  agentguard::OutcomeDetector detector =
      agentguard::parse_detector(agentguard::parse_json(document, "detector"));
  agentguard::validate_detector(detector);
  return detector;
}

agentguard::ConstraintSet constraints_from(const std::string& document) {
  return agentguard::parse_json(document, "constraint set").get<agentguard::ConstraintSet>();
}

std::string dump(const nlohmann::json& j) { return j.dump(2); }

int count_denied(const agentguard::ExecutionRecord& record) {
  int denied = 0;
  for (const agentguard::StepResult& step : record.step_results) {
    if (step.status == agentguard::StepStatus::denied) ++denied;
  }
  return denied;
}

}  // namespace

PYBIND11_MODULE(_agentguard, m) {
  m.doc() = "Sandboxed safety evaluation and policy hardening for tool-using agents";

  py::register_exception<agentguard::Error>(m, "AgentGuardError");

  m.def(
      "load_profile",
      [](const std::string& document) { return dump(nlohmann::json(profile_from(document))); },
      py::arg("document"),
      "Parse and validate an agent profile document; returns the normalized profile as JSON.");

  m.def(
      "run_evaluation",
      [](const std::string& config_path) {
        agentguard::CliOptions options;
        options.config_path = config_path;
        agentguard::EvaluationReport report =
            agentguard::run_evaluation(agentguard::resolve_config(options));
        return agentguard::serialize_report(report);
      },
      py::arg("config_path"),
      "Run the full identify/validate/harden/verify pipeline described by a config file; "
      "returns the evaluation report as JSON.");

  m.def(
      "execute_plan",
      [](const std::string& profile, const std::string& env_fixture, const std::string& plan,
         const std::string& constraints, bool halt_on_deny) {
        agentguard::AgentProfile parsed_profile = profile_from(profile);
        agentguard::EnvFixture fixture = fixture_from(env_fixture);
        agentguard::OrchestrationPlan parsed_plan = plan_from(plan);
        std::optional<agentguard::ConstraintSet> set;
        if (!constraints.empty()) set = constraints_from(constraints);
        agentguard::ExecutionResult result = agentguard::execute_plan(
            parsed_plan, fixture.env, parsed_profile, set ? &*set : nullptr, halt_on_deny);
        return dump(nlohmann::json{
            {"record", agentguard::ExecutionSummary::from(result.record)},
            {"denied_steps", count_denied(result.record)},
            {"final_env", result.env},
        });
      },
      py::arg("profile"), py::arg("env_fixture"), py::arg("plan"),
      py::arg("constraints") = std::string(), py::arg("halt_on_deny") = false,
      "Execute a tool-call plan against an environment fixture, optionally under a "
      "constraint set; returns the execution record and the resulting environment.");

  m.def(
      "execute_and_detect",
      [](const std::string& profile, const std::string& env_fixture, const std::string& plan,
         const std::string& detector, const std::string& constraints, bool halt_on_deny) {
        agentguard::AgentProfile parsed_profile = profile_from(profile);
        agentguard::EnvFixture fixture = fixture_from(env_fixture);
        agentguard::OrchestrationPlan parsed_plan = plan_from(plan);
        agentguard::OutcomeDetector parsed_detector = detector_from(detector);
        std::optional<agentguard::ConstraintSet> set;
        if (!constraints.empty()) set = constraints_from(constraints);
        agentguard::ExecutionResult result = agentguard::execute_plan(
            parsed_plan, fixture.env, parsed_profile, set ? &*set : nullptr, halt_on_deny);
        agentguard::DetectionResult verdict =
            agentguard::detect(parsed_detector, result.record, fixture.env, result.env);
        return dump(nlohmann::json{
            {"record", agentguard::ExecutionSummary::from(result.record)},
            {"denied_steps", count_denied(result.record)},
            {"detection", verdict},
        });
      },
      py::arg("profile"), py::arg("env_fixture"), py::arg("plan"), py::arg("detector"),
      py::arg("constraints") = std::string(), py::arg("halt_on_deny") = false,
      "Execute a plan and evaluate an outcome detector over the before/after environments; "
      "returns the execution record, denied step count and detection verdict.");

  m.def(
      "check",
      [](const std::string& constraints, const std::string& profile,
         const std::string& env_fixture, const std::string& invocation) {
        agentguard::ConstraintSet set = constraints_from(constraints);
        agentguard::AgentProfile parsed_profile = profile_from(profile);
        agentguard::EnvFixture fixture = fixture_from(env_fixture);
        agentguard::ToolInvocation parsed_invocation =
            agentguard::parse_json(invocation, "invocation").get<agentguard::ToolInvocation>();
        const agentguard::ToolAction* action =
            parsed_profile.find_action(parsed_invocation.tool, parsed_invocation.action);
        if (action == nullptr) {
          throw agentguard::ValidationError("invocation references undeclared action " +
                                            parsed_invocation.tool + "." +
                                            parsed_invocation.action);
        }
        agentguard::CheckResult verdict =
            agentguard::check(set, parsed_invocation, *action, fixture.env);
        return dump(nlohmann::json{{"denied", verdict.denied},
                                   {"constraint_id", verdict.constraint_id}});
      },
      py::arg("constraints"), py::arg("profile"), py::arg("env_fixture"), py::arg("invocation"),
      "Evaluate a single tool invocation against a constraint set; first matching deny rule "
      "wins, unmatched invocations are allowed.");

  m.def(
      "analyze_root_cause",
      [](const std::string& profile, const std::string& env_fixture, const std::string& plan,
         const std::string& detector, const std::string& workflow_id) {
        agentguard::AgentProfile parsed_profile = profile_from(profile);
        agentguard::EnvFixture fixture = fixture_from(env_fixture);
        agentguard::OrchestrationPlan parsed_plan = plan_from(plan);
        agentguard::OutcomeDetector parsed_detector = detector_from(detector);
        agentguard::RootCause cause = agentguard::analyze_root_cause(
            parsed_plan, fixture.env, parsed_detector, parsed_profile, workflow_id);
        return dump(nlohmann::json(cause));
      },
      py::arg("profile"), py::arg("env_fixture"), py::arg("plan"), py::arg("detector"),
      py::arg("workflow_id") = std::string(),
      "Find a minimal subsequence of the plan that still triggers the detector; returns the "
      "causal step indices and a summary.");

  m.def(
      "parse_constraints",
      [](const std::string& text) {
        return dump(nlohmann::json(agentguard::parse_constraints(text)));
      },
      py::arg("text"),
      "Extract and validate a constraint array from free-form model output; returns the "
      "parsed constraint set as JSON.");

  m.def(
      "fallback_constraints",
      [](const std::string& root_cause, const std::string& plan, const std::string& env_fixture,
         const std::string& profile) {
        agentguard::RootCause cause =
            agentguard::parse_json(root_cause, "root cause").get<agentguard::RootCause>();
        agentguard::OrchestrationPlan parsed_plan = plan_from(plan);
        agentguard::EnvFixture fixture = fixture_from(env_fixture);
        agentguard::AgentProfile parsed_profile = profile_from(profile);
        agentguard::ConstraintSet set =
            agentguard::fallback_constraints(cause, parsed_plan, fixture.env, parsed_profile);
        return dump(nlohmann::json(set));
      },
      py::arg("root_cause"), py::arg("plan"), py::arg("env_fixture"), py::arg("profile"),
      "Instantiate the deterministic deny template for the last effectful causal step.");

  m.def(
      "render_selinux",
      [](const std::string& constraints) {
        agentguard::ConstraintSet set = constraints_from(constraints);
        return agentguard::render_selinux(set, agentguard::default_label_plan({&set}));
      },
      py::arg("constraints"),
      "Render a constraint set as SELinux type declarations, file-context bindings and "
      "neverallow rules.");

  m.def(
      "render_markdown",
      [](const std::string& report) {
        return agentguard::render_markdown(agentguard::parse_report(report));
      },
      py::arg("report"), "Render a serialized evaluation report as markdown.");

  m.def(
      "export_selinux_bundle",
      [](const std::string& report) {
        agentguard::EvaluationReport parsed = agentguard::parse_report(report);
        return agentguard::export_selinux_bundle(parsed, agentguard::report_label_plan(parsed));
      },
      py::arg("report"),
      "Concatenate the policy renders for every workflow in a serialized report whose "
      "constraints validated.");
}
