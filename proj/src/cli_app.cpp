#include "agentguard/cli_app.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <iostream>
#include <set>

#include "agentguard/errors.hpp"
#include "agentguard/json_util.hpp"

namespace agentguard {
namespace {

namespace fs = std::filesystem;

const char* kWorkflowsFile = "workflows.json";
const char* kTestCasesFile = "testcases.json";
const char* kConstraintsFile = "constraints.json";
const char* kReportFile = "report.json";
const char* kMarkdownFile = "report.md";
const char* kBundleFile = "selinux_bundle.txt";
const char* kLockFile = "agentguard.lock";

ProviderSettings::Kind provider_kind_of(const std::string& name) {
  if (name == "scripted") return ProviderSettings::Kind::scripted;
  if (name == "remote") return ProviderSettings::Kind::remote;
  throw ConfigError("unknown provider \"" + name + "\" (expected scripted or remote)");
}

void apply_config_file(RunConfig& config, const std::string& path) {
  nlohmann::json doc = parse_json(read_text_file(path), "config file");
  if (!doc.is_object()) {
    throw ConfigError("config file must hold a JSON object");
  }
  static const std::set<std::string> known = {
      "profile",          "scenarios",       "env",
      "templates",        "out",             "provider",
      "script",           "endpoint",        "model",
      "temperature",      "max_tokens",      "max_review_iters",
      "max_repair_iters", "halt_on_deny",    "max_workflows",
      "jailbreak_preamble", "deterministic", "run_id",
      "retry_attempts",   "retry_base_delay_ms",
  };
  for (const auto& [key, value] : doc.items()) {
    if (known.count(key) == 0) {
      throw ConfigError("unknown config key \"" + key + "\"");
    }
  }
  auto str = [&](const char* key, std::string& target) {
    if (doc.contains(key)) {
      if (!doc[key].is_string()) throw ConfigError(std::string(key) + " must be a string");
      target = doc[key].get<std::string>();
    }
  };
  auto integer = [&](const char* key, int& target) {
    if (doc.contains(key)) {
      if (!doc[key].is_number_integer()) {
        throw ConfigError(std::string(key) + " must be an integer");
      }
      target = doc[key].get<int>();
    }
  };
  auto boolean = [&](const char* key, bool& target) {
    if (doc.contains(key)) {
      if (!doc[key].is_boolean()) throw ConfigError(std::string(key) + " must be a boolean");
      target = doc[key].get<bool>();
    }
  };
  str("profile", config.profile_path);
  str("scenarios", config.scenarios_path);
  str("env", config.env_path);
  str("templates", config.templates_path);
  str("out", config.out_dir);
  if (doc.contains("provider")) {
    if (!doc["provider"].is_string()) throw ConfigError("provider must be a string");
    config.provider.kind = provider_kind_of(doc["provider"].get<std::string>());
  }
  str("script", config.provider.script_path);
  str("endpoint", config.provider.endpoint);
  str("model", config.provider.model);
  if (doc.contains("temperature")) {
    if (!doc["temperature"].is_number()) throw ConfigError("temperature must be a number");
    config.temperature = doc["temperature"].get<double>();
  }
  integer("max_tokens", config.max_tokens);
  integer("max_review_iters", config.loops.max_review_iters);
  integer("max_repair_iters", config.loops.max_repair_iters);
  boolean("halt_on_deny", config.halt_on_deny);
  integer("max_workflows", config.max_workflows);
  boolean("jailbreak_preamble", config.jailbreak_preamble);
  boolean("deterministic", config.deterministic);
  str("run_id", config.run_id);
  integer("retry_attempts", config.retry.attempts);
  integer("retry_base_delay_ms", config.retry.base_delay_ms);
}

fs::path state_path(const RunConfig& config, const char* name) {
  return fs::path(config.out_dir) / name;
}

void write_state(const RunConfig& config, const char* name, const RunState& state) {
  nlohmann::json j = state;
  write_text_file(state_path(config, name), j.dump(2) + "\n");
}

RunState read_state(const RunConfig& config, const char* name) {
  fs::path path = state_path(config, name);
  if (!fs::exists(path)) {
    throw MissingArtifact(path.string());
  }
  nlohmann::json j = parse_json(read_text_file(path), std::string("run state ") + name);
  return j.get<RunState>();
}

void write_report_artifacts(const RunConfig& config, const EvaluationReport& report) {
  write_text_file(state_path(config, kReportFile), serialize_report(report));
  write_text_file(state_path(config, kMarkdownFile), render_markdown(report));
  write_text_file(state_path(config, kBundleFile),
                  export_selinux_bundle(report, report_label_plan(report)));
}

void print_summary(const EvaluationReport& report) {
  const Metrics& m = report.metrics;
  std::cout << "run " << report.run_id << ": identified=" << m.workflows_identified
            << " rejected=" << m.rejected_hallucination << " risk_validated=" << m.risk_validated
            << " constraints_validated=" << m.constraints_validated
            << " unsafe_before=" << m.unsafe_outcomes_before
            << " unsafe_after=" << m.unsafe_outcomes_after << "\n";
}

}  // namespace

RunConfig resolve_config(const CliOptions& options) {
  RunConfig config;
  if (!options.config_path.empty()) {
    apply_config_file(config, options.config_path);
  }
  if (!options.profile.empty()) config.profile_path = options.profile;
  if (!options.scenarios.empty()) config.scenarios_path = options.scenarios;
  if (!options.env.empty()) config.env_path = options.env;
  if (!options.provider.empty()) config.provider.kind = provider_kind_of(options.provider);
  if (!options.script.empty()) config.provider.script_path = options.script;
  if (!options.endpoint.empty()) config.provider.endpoint = options.endpoint;
  if (!options.model.empty()) config.provider.model = options.model;
  if (options.temperature) config.temperature = *options.temperature;
  if (options.max_review_iters) config.loops.max_review_iters = *options.max_review_iters;
  if (options.max_repair_iters) config.loops.max_repair_iters = *options.max_repair_iters;
  if (options.deterministic) config.deterministic = true;
  if (!options.out_dir.empty()) config.out_dir = options.out_dir;
  if (config.temperature < 0.0 || config.temperature > 2.0) {
    throw ConfigError("temperature must lie within [0, 2]");
  }
  if (config.loops.max_review_iters < 1 || config.loops.max_repair_iters < 1) {
    throw ConfigError("loop budgets must be at least 1");
  }
  if (config.out_dir.empty()) {
    throw ConfigError("output directory must not be empty");
  }
  return config;
}

int exit_code_for(const Metrics& metrics) {
  if (metrics.risk_validated >= 1 && metrics.constraints_validated == 0) {
    return 2;
  }
  return 0;
}

RunLock::RunLock(const fs::path& dir) : path_(dir / kLockFile) {
  fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd_ < 0) {
    throw ConfigError("run directory is locked by another process: " + path_.string());
  }
}

RunLock::~RunLock() {
  if (fd_ >= 0) {
    ::close(fd_);
    ::unlink(path_.c_str());
  }
}

int cmd_evaluate(const CliOptions& options) {
  RunConfig config = resolve_config(options);
  fs::create_directories(config.out_dir);
  RunLock lock(config.out_dir);
  PipelineSession session = PipelineSession::open(config);
  RunState state = run_phase_identify(session);
  write_state(config, kWorkflowsFile, state);
  run_phase_validate(session, state);
  write_state(config, kTestCasesFile, state);
  run_phase_harden(session, state);
  write_state(config, kConstraintsFile, state);
  run_phase_verify(session, state);
  EvaluationReport report = report_from_state(session, state);
  write_report_artifacts(config, report);
  print_summary(report);
  return exit_code_for(report.metrics);
}

int cmd_phase(const CliOptions& options, const std::string& phase) {
  RunConfig config = resolve_config(options);
  fs::create_directories(config.out_dir);
  RunLock lock(config.out_dir);
  PipelineSession session = PipelineSession::open(config);
  if (phase == "identify") {
    RunState state = run_phase_identify(session);
    write_state(config, kWorkflowsFile, state);
    return 0;
  }
  if (phase == "validate") {
    RunState state = read_state(config, kWorkflowsFile);
    run_phase_validate(session, state);
    write_state(config, kTestCasesFile, state);
    return 0;
  }
  if (phase == "harden") {
    RunState state = read_state(config, kTestCasesFile);
    run_phase_harden(session, state);
    write_state(config, kConstraintsFile, state);
    return 0;
  }
  if (phase == "verify") {
    RunState state = read_state(config, kConstraintsFile);
    run_phase_verify(session, state);
    EvaluationReport report = report_from_state(session, state);
    write_report_artifacts(config, report);
    print_summary(report);
    return exit_code_for(report.metrics);
  }
  throw ConfigError("unknown phase \"" + phase + "\" (expected identify, validate, harden or verify)");
}

int cmd_report(const CliOptions& options, const std::string& format) {
  RunConfig config = resolve_config(options);
  fs::path path = state_path(config, kReportFile);
  if (!fs::exists(path)) {
    throw MissingArtifact(path.string());
  }
  EvaluationReport report = parse_report(read_text_file(path));
  if (format == "markdown") {
    std::cout << render_markdown(report);
    return 0;
  }
  if (format == "selinux") {
    std::cout << export_selinux_bundle(report, report_label_plan(report));
    return 0;
  }
  throw ConfigError("unknown report format \"" + format + "\" (expected markdown or selinux)");
}

}  // namespace agentguard
