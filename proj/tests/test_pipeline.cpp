#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agentguard/errors.hpp"
#include "agentguard/pipeline.hpp"
#include "agentguard/report.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace agentguard;
using nlohmann::json;

namespace {

RunConfig fixtures_config(const std::string& script,
                          const std::string& scenarios = "coding_tasks.json") {
  RunConfig config;
  auto fixtures = testutil::fixtures_dir();
  config.profile_path = (fixtures / "profiles" / "coding_agent.json").string();
  config.scenarios_path = (fixtures / "scenarios" / scenarios).string();
  config.env_path = (fixtures / "envs" / "workspace.json").string();
  config.templates_path = testutil::templates_dir().string();
  config.provider.kind = ProviderSettings::Kind::scripted;
  config.provider.script_path = (fixtures / "scripts" / script).string();
  config.deterministic = true;
  config.run_id = "test-run";
  return config;
}

UnsafeWorkflow started_workflow(const std::string& id) {
  UnsafeWorkflow workflow;
  workflow.workflow_id = id;
  workflow.scenario = {"s1", "scenario"};
  workflow.description = "does something unsafe";
  advance_status(workflow, WorkflowStatus::identified, "from test", "1970-01-01T00:00:00Z");
  return workflow;
}

const WorkflowRecord* find_record(const RunState& state, const std::string& id) {
  for (const WorkflowRecord& record : state.workflows) {
    if (record.workflow.workflow_id == id) return &record;
  }
  return nullptr;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("workflow status names round trip and terminality is fixed") {
    const WorkflowStatus all[] = {
        WorkflowStatus::identified,          WorkflowStatus::rejected_hallucination,
        WorkflowStatus::test_generated,      WorkflowStatus::risk_validated,
        WorkflowStatus::risk_not_reproduced, WorkflowStatus::constraints_proposed,
        WorkflowStatus::constraints_validated, WorkflowStatus::constraints_failed,
    };
    for (WorkflowStatus status : all) {
      auto back = workflow_status_from_string(to_string(status));
      REQUIRE(back.has_value());
      CHECK(*back == status);
    }
    CHECK(!workflow_status_from_string("validated").has_value());

    CHECK(!is_terminal(WorkflowStatus::identified));
    CHECK(!is_terminal(WorkflowStatus::test_generated));
    CHECK(!is_terminal(WorkflowStatus::risk_validated));
    CHECK(!is_terminal(WorkflowStatus::constraints_proposed));
    CHECK(is_terminal(WorkflowStatus::rejected_hallucination));
    CHECK(is_terminal(WorkflowStatus::risk_not_reproduced));
    CHECK(is_terminal(WorkflowStatus::constraints_validated));
    CHECK(is_terminal(WorkflowStatus::constraints_failed));
  }

  TEST_CASE("principle names round trip") {
    const Principle all[] = {Principle::confidentiality, Principle::integrity,
                             Principle::availability, Principle::least_privilege,
                             Principle::authorization};
    for (Principle principle : all) {
      auto back = principle_from_string(to_string(principle));
      REQUIRE(back.has_value());
      CHECK(*back == principle);
    }
    CHECK(!principle_from_string("privacy").has_value());
  }

  TEST_CASE("status transitions are forward-only") {
    UnsafeWorkflow workflow;
    workflow.workflow_id = "wf";

    CHECK_THROWS_AS(
        advance_status(workflow, WorkflowStatus::test_generated, "r", "t"), std::logic_error);

    advance_status(workflow, WorkflowStatus::identified, "found", "t1");
    CHECK(workflow.status == WorkflowStatus::identified);
    REQUIRE(workflow.history.size() == 1);
    CHECK(workflow.history[0].reason == "found");

    CHECK_THROWS_AS(advance_status(workflow, WorkflowStatus::identified, "again", "t2"),
                    std::logic_error);

    advance_status(workflow, WorkflowStatus::test_generated, "built", "t2");
    advance_status(workflow, WorkflowStatus::risk_validated, "triggered", "t3");
    CHECK_THROWS_AS(advance_status(workflow, WorkflowStatus::test_generated, "back", "t4"),
                    std::logic_error);

    advance_status(workflow, WorkflowStatus::constraints_validated, "done", "t4");
    CHECK_THROWS_AS(
        advance_status(workflow, WorkflowStatus::constraints_failed, "flip", "t5"),
        std::logic_error);

    CHECK(workflow.history_contains(WorkflowStatus::test_generated));
    CHECK(workflow.history_contains(WorkflowStatus::constraints_validated));
    CHECK(!workflow.history_contains(WorkflowStatus::constraints_proposed));
  }

  TEST_CASE("detector compatibility table") {
    CHECK(detector_compatible(DetectorKind::file_modified_under, {}));
    CHECK(detector_compatible(DetectorKind::purchase_placed, {}));

    CHECK(detector_compatible(DetectorKind::file_modified_under, {Principle::integrity}));
    CHECK(detector_compatible(DetectorKind::file_modified_under, {Principle::least_privilege}));
    CHECK(!detector_compatible(DetectorKind::file_modified_under, {Principle::confidentiality}));

    CHECK(detector_compatible(DetectorKind::sensitive_data_egressed,
                              {Principle::confidentiality}));
    CHECK(!detector_compatible(DetectorKind::sensitive_data_egressed, {Principle::integrity}));

    CHECK(detector_compatible(DetectorKind::message_sent_unauthorized,
                              {Principle::authorization}));
    CHECK(detector_compatible(DetectorKind::message_sent_unauthorized,
                              {Principle::confidentiality}));
    CHECK(!detector_compatible(DetectorKind::message_sent_unauthorized,
                               {Principle::availability}));

    CHECK(detector_compatible(DetectorKind::process_spawned, {Principle::availability}));
    CHECK(!detector_compatible(DetectorKind::process_spawned, {Principle::authorization}));

    CHECK(detector_compatible(DetectorKind::purchase_placed, {Principle::authorization}));
    CHECK(!detector_compatible(DetectorKind::purchase_placed, {Principle::confidentiality}));

    CHECK(detector_compatible(DetectorKind::sensitive_data_egressed,
                              {Principle::integrity, Principle::confidentiality}));
  }

  TEST_CASE("execution summaries keep step statuses but drop arguments") {
    ExecutionRecord record;
    record.plan_id = "plan-1";
    record.initial_env_digest = "aaa";
    record.final_env_digest = "bbb";
    record.step_results = {
        {{"files", "write", {{"path", "/data/x"}, {"content", "secret"}}}, StepStatus::ok, "", ""},
        {{"files", "write", {{"path", "/data/y"}}}, StepStatus::denied, "c-1", ""},
        {{"ssh", "connect", {}}, StepStatus::tool_error, "", "unknown invocation"},
    };
    ExecutionSummary summary = ExecutionSummary::from(record);
    CHECK(summary.plan_id == "plan-1");
    CHECK(summary.initial_env_digest == "aaa");
    CHECK(summary.final_env_digest == "bbb");
    REQUIRE(summary.steps.size() == 3);
    CHECK(summary.steps[0].tool == "files");
    CHECK(summary.steps[0].status == StepStatus::ok);
    CHECK(summary.steps[1].status == StepStatus::denied);
    CHECK(summary.steps[1].constraint_id == "c-1");
    CHECK(summary.steps[2].status == StepStatus::tool_error);
    CHECK(summary.steps[2].error == "unknown invocation");

    json j = summary;
    CHECK(j.get<ExecutionSummary>() == summary);
    CHECK(j["steps"][0].contains("constraint_id") == false);
    CHECK(j["steps"][0].contains("error") == false);
  }

  TEST_CASE("workflow and run state documents round trip") {
    UnsafeWorkflow workflow = started_workflow("wf-001");
    workflow.tool_sequence = {"file_io", "email"};
    workflow.expected_risks = "leaks data";
    workflow.violated_principles = {Principle::confidentiality, Principle::authorization};
    advance_status(workflow, WorkflowStatus::test_generated, "ok", "1980-01-01T00:00:00Z");
    json wj = workflow;
    CHECK(wj.get<UnsafeWorkflow>() == workflow);

    TestCase test_case;
    test_case.workflow_id = "wf-001";
    test_case.plan = {"wf-001-plan", {{"file_io", "read_file", {{"path", "/x"}}}}};
    test_case.detector = {"wf-001-detector", DetectorKind::sensitive_data_egressed,
                          {{"label", "sensitive"}}};
    test_case.env_fixture_id = "workspace";
    json tj = test_case;
    CHECK(tj.get<TestCase>() == test_case);

    WorkflowRecord bare;
    bare.workflow = workflow;
    json bare_json = bare;
    CHECK(!bare_json.contains("test_case"));
    CHECK(!bare_json.contains("unsafe_before"));
    CHECK(bare_json.get<WorkflowRecord>() == bare);

    WorkflowRecord full;
    full.workflow = workflow;
    full.test_case = test_case;
    full.execution = ExecutionSummary{"wf-001-plan", "d1", "d2", {{"file_io", "read_file",
                                                                  StepStatus::ok, "", ""}}};
    full.detection = DetectionResult{"wf-001-detector", true, "attacker@evil.example"};
    full.constraints = ConstraintSet{};
    full.unsafe_before = 1;
    full.unsafe_after = 0;
    json full_json = full;
    CHECK(full_json.get<WorkflowRecord>() == full);

    RunState state;
    state.run_id = "run-1";
    state.agent_id = "repo-helper";
    state.env_fixture_id = "workspace";
    state.model_config = {"scripted", "full_run", 0.0};
    state.scenarios = {{{"s1", "desc"}, ""}, {{"s2", "desc2"}, "identification failed"}};
    state.workflows = {bare, full};
    json sj = state;
    CHECK(sj.get<RunState>() == state);
  }

  TEST_CASE("session opening validates configuration") {
    RunConfig config = fixtures_config("full_run.json");
    PipelineSession session = PipelineSession::open(config);
    CHECK(session.profile().agent_id == "repo-helper");
    CHECK(session.scenarios().size() == 2);
    CHECK(session.fixture().env_id == "workspace");
    CHECK(session.now() == "1970-01-01T00:00:00Z");
    CHECK(session.now() == session.now());

    RunConfig no_profile = config;
    no_profile.profile_path = "";
    CHECK_THROWS_AS(PipelineSession::open(no_profile), ConfigError);

    RunConfig bad_loops = config;
    bad_loops.loops.max_review_iters = 0;
    CHECK_THROWS_AS(PipelineSession::open(bad_loops), ConfigError);

    RunConfig missing_script = config;
    missing_script.provider.script_path = "/nonexistent/script.json";
    CHECK_THROWS_AS(PipelineSession::open(missing_script), Error);
  }

  TEST_CASE("identification parses workflows and rejects hallucinated tools") {
    PipelineSession session = PipelineSession::open(fixtures_config("full_run.json"));
    IdentifyResult result = identify_unsafe_workflows(session);

    REQUIRE(result.scenarios.size() == 2);
    CHECK(result.scenarios[0].phase1_error.empty());
    CHECK(result.scenarios[1].phase1_error.empty());

    REQUIRE(result.workflows.size() == 3);
    CHECK(result.workflows[0].workflow_id == "wf-001");
    CHECK(result.workflows[0].status == WorkflowStatus::identified);
    CHECK(result.workflows[0].scenario.scenario_id == "s1-config-refactor");
    CHECK(result.workflows[1].workflow_id == "wf-002");
    CHECK(result.workflows[1].status == WorkflowStatus::identified);

    const UnsafeWorkflow& rejected = result.workflows[2];
    CHECK(rejected.workflow_id == "wf-003");
    CHECK(rejected.status == WorkflowStatus::rejected_hallucination);
    REQUIRE(rejected.hallucination_evidence.size() == 1);
    CHECK(rejected.hallucination_evidence[0] == "ssh_client");
    REQUIRE(rejected.history.size() == 2);
    CHECK(rejected.history[1].reason.find("ssh_client") != std::string::npos);
  }

  TEST_CASE("validation executes the accepted test case and applies the detector") {
    PipelineSession session = PipelineSession::open(fixtures_config("full_run.json"));
    IdentifyResult identified = identify_unsafe_workflows(session);
    UnsafeWorkflow workflow = identified.workflows[0];

    ValidationOutcome outcome = validate_workflow(session, workflow);
    CHECK(workflow.status == WorkflowStatus::risk_validated);
    REQUIRE(outcome.test_case.has_value());
    CHECK(outcome.test_case->plan.plan_id == "wf-001-plan");
    CHECK(outcome.test_case->env_fixture_id == "workspace");
    REQUIRE(outcome.execution.has_value());
    CHECK(outcome.execution->step_results.size() == outcome.test_case->plan.steps.size());
    REQUIRE(outcome.detection.has_value());
    CHECK(outcome.detection->triggered);
    CHECK(outcome.detection->evidence == "/workspace/restricted/deploy.cfg");

    CHECK_THROWS_AS(validate_workflow(session, workflow), std::logic_error);
  }

  TEST_CASE("hardening proposes constraints that verification then validates") {
    PipelineSession session = PipelineSession::open(fixtures_config("full_run.json"));
    IdentifyResult identified = identify_unsafe_workflows(session);
    UnsafeWorkflow workflow = identified.workflows[0];
    ValidationOutcome outcome = validate_workflow(session, workflow);
    REQUIRE(outcome.test_case.has_value());

    ConstraintSet constraints = harden_workflow(session, workflow, *outcome.test_case,
                                                *outcome.execution, *outcome.detection);
    CHECK(workflow.status == WorkflowStatus::constraints_proposed);
    REQUIRE(constraints.size() == 1);
    CHECK(constraints.constraints[0].subject == "file_io");
    CHECK(constraints.constraints[0].action_category == EffectCategory::file_write);

    VerifyResult verdict = verify_constraints(session, workflow, *outcome.test_case, constraints);
    CHECK(verdict.validated);
    CHECK(!verdict.detection.triggered);
    CHECK(verdict.denied_steps >= 1);
    CHECK(workflow.status == WorkflowStatus::constraints_validated);

    UnsafeWorkflow fresh = identified.workflows[1];
    CHECK_THROWS_AS(
        harden_workflow(session, fresh, *outcome.test_case, *outcome.execution,
                        *outcome.detection),
        std::logic_error);
  }

  TEST_CASE("empty constraint sets never validate") {
    PipelineSession session = PipelineSession::open(fixtures_config("full_run.json"));
    IdentifyResult identified = identify_unsafe_workflows(session);
    UnsafeWorkflow workflow = identified.workflows[0];
    ValidationOutcome outcome = validate_workflow(session, workflow);
    advance_status(workflow, WorkflowStatus::constraints_proposed, "empty set for test",
                   session.now());

    VerifyResult verdict = verify_constraints(session, workflow, *outcome.test_case,
                                              ConstraintSet{});
    CHECK(!verdict.validated);
    CHECK(verdict.detection.triggered);
    CHECK(verdict.denied_steps == 0);
    CHECK(workflow.status == WorkflowStatus::constraints_failed);
  }

  TEST_CASE("full run produces the expected metrics") {
    EvaluationReport report = run_evaluation(fixtures_config("full_run.json"));
    CHECK(report.run_id == "test-run");
    CHECK(report.agent_id == "repo-helper");
    CHECK(report.env_fixture_id == "workspace");
    CHECK(report.model_config.provider == "scripted");
    CHECK(report.model_config.model == "full_run");
    CHECK(report.metrics.workflows_identified == 2);
    CHECK(report.metrics.rejected_hallucination == 1);
    CHECK(report.metrics.risk_validated == 2);
    CHECK(report.metrics.constraints_validated == 2);
    CHECK(report.metrics.unsafe_outcomes_before == 2);
    CHECK(report.metrics.unsafe_outcomes_after == 0);
  }

  TEST_CASE("one-shot evaluation equals chained phase drivers") {
    RunConfig config = fixtures_config("full_run.json");
    EvaluationReport one_shot = run_evaluation(config);

    PipelineSession session = PipelineSession::open(config);
    RunState state = run_phase_identify(session);
    run_phase_validate(session, state);
    run_phase_harden(session, state);
    run_phase_verify(session, state);
    EvaluationReport chained = report_from_state(session, state);

    CHECK(one_shot == chained);
    CHECK(serialize_report(one_shot) == serialize_report(chained));
  }

  TEST_CASE("missing hardening responses fail the workflows but not the run") {
    EvaluationReport report = run_evaluation(fixtures_config("no_harden.json"));
    CHECK(report.metrics.risk_validated == 2);
    CHECK(report.metrics.constraints_validated == 0);
    CHECK(report.metrics.unsafe_outcomes_before == 2);
    CHECK(report.metrics.unsafe_outcomes_after == 2);
    for (const ScenarioEntry& entry : report.entries) {
      for (const WorkflowRecord& record : entry.workflows) {
        if (!record.workflow.history_contains(WorkflowStatus::risk_validated)) continue;
        CHECK(record.workflow.status == WorkflowStatus::constraints_failed);
        CHECK(!record.constraints.has_value());
        CHECK(record.unsafe_after == 1);
      }
    }
  }

  TEST_CASE("prose-only hardening responses fall back to the deny template") {
    RunConfig config = fixtures_config("fallback_run.json");
    config.loops.max_repair_iters = 2;
    EvaluationReport report = run_evaluation(config);
    CHECK(report.metrics.constraints_validated == 2);
    CHECK(report.metrics.unsafe_outcomes_after == 0);

    bool checked = false;
    for (const ScenarioEntry& entry : report.entries) {
      for (const WorkflowRecord& record : entry.workflows) {
        if (!record.constraints.has_value()) continue;
        REQUIRE(record.constraints->size() == 1);
        const SafetyConstraint& rule = record.constraints->constraints[0];
        CHECK(rule.constraint_id ==
              record.workflow.workflow_id + "-fallback-1");
        CHECK(rule.provenance == record.workflow.workflow_id);
        checked = true;
      }
    }
    CHECK(checked);
  }

  TEST_CASE("repair paths recover malformed test cases and wildcard rules") {
    RunConfig config = fixtures_config("repair_paths.json", "config_only.json");
    EvaluationReport report = run_evaluation(config);
    REQUIRE(report.entries.size() == 1);
    REQUIRE(report.entries[0].workflows.size() == 1);
    const WorkflowRecord& record = report.entries[0].workflows[0];
    CHECK(record.workflow.status == WorkflowStatus::constraints_validated);

    std::vector<WorkflowStatus> sequence;
    for (const StatusEvent& event : record.workflow.history) sequence.push_back(event.status);
    CHECK(sequence == std::vector<WorkflowStatus>{
                          WorkflowStatus::identified, WorkflowStatus::test_generated,
                          WorkflowStatus::risk_validated, WorkflowStatus::constraints_proposed,
                          WorkflowStatus::constraints_validated});
    REQUIRE(record.execution.has_value());
    for (const StepSummary& step : record.execution->steps) {
      CHECK(step.status == StepStatus::ok);
    }
  }

  TEST_CASE("deterministic runs serialize identically") {
    RunConfig config = fixtures_config("full_run.json");
    std::string first = serialize_report(run_evaluation(config));
    std::string second = serialize_report(run_evaluation(config));
    CHECK(first == second);
  }
}
