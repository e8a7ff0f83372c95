#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "agentguard/cli_app.hpp"
#include "agentguard/errors.hpp"

namespace {

void add_common_options(CLI::App& cmd, agentguard::CliOptions& options) {
  cmd.add_option("--config", options.config_path, "JSON run configuration file");
  cmd.add_option("--profile", options.profile, "agent profile JSON file");
  cmd.add_option("--scenarios", options.scenarios, "task scenario JSON file");
  cmd.add_option("--env", options.env, "virtual environment fixture JSON file");
  cmd.add_option("--provider", options.provider, "completion provider: scripted or remote");
  cmd.add_option("--script", options.script, "scripted provider response file");
  cmd.add_option("--endpoint", options.endpoint, "remote provider chat-completions URL");
  cmd.add_option("--model", options.model, "remote provider model name");
  cmd.add_option("--temperature", options.temperature, "sampling temperature in [0, 2]");
  cmd.add_option("--max-review-iters", options.max_review_iters,
                 "quality-control loop budget (minimum 1)");
  cmd.add_option("--max-repair-iters", options.max_repair_iters,
                 "repair loop budget (minimum 1)");
  cmd.add_flag("--deterministic", options.deterministic,
               "pin timestamps so repeated runs produce identical artifacts");
  cmd.add_option("--out", options.out_dir, "run directory for artifacts");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"identify, validate and harden unsafe tool-use workflows before deployment"};
  app.require_subcommand(1);
  agentguard::CliOptions options;
  std::string phase;
  std::string format;

  CLI::App* evaluate = app.add_subcommand("evaluate", "run all four phases and write the report");
  add_common_options(*evaluate, options);

  CLI::App* phase_cmd = app.add_subcommand("phase", "run a single phase against the run directory");
  phase_cmd->add_option("name", phase, "identify, validate, harden or verify")->required();
  add_common_options(*phase_cmd, options);

  CLI::App* report_cmd = app.add_subcommand("report", "render the stored report");
  report_cmd->add_option("format", format, "markdown or selinux")->required();
  add_common_options(*report_cmd, options);

  CLI11_PARSE(app, argc, argv);

  try {
    if (evaluate->parsed()) return agentguard::cmd_evaluate(options);
    if (phase_cmd->parsed()) return agentguard::cmd_phase(options, phase);
    return agentguard::cmd_report(options, format);
  } catch (const agentguard::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
