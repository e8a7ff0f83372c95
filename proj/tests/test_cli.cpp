#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "agentguard/cli_app.hpp"
#include "agentguard/errors.hpp"
#include "agentguard/report.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace agentguard;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

struct CaptureCout {
  std::ostringstream stream;
  std::streambuf* old;
  CaptureCout() : old(std::cout.rdbuf(stream.rdbuf())) {}
  ~CaptureCout() { std::cout.rdbuf(old); }
  std::string text() const { return stream.str(); }
};

CliOptions fixture_options(const std::string& script, const fs::path& out) {
  CliOptions options;
  auto fixtures = testutil::fixtures_dir();
  options.profile = (fixtures / "profiles" / "coding_agent.json").string();
  options.scenarios = (fixtures / "scenarios" / "coding_tasks.json").string();
  options.env = (fixtures / "envs" / "workspace.json").string();
  options.provider = "scripted";
  options.script = (fixtures / "scripts" / script).string();
  options.deterministic = true;
  options.out_dir = out.string();
  return options;
}

int run_cli(const std::string& args) {
  std::string command = std::string(AGENTGUARD_TEST_CLI) + " " + args;
  int status = std::system(command.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config resolution layers file values under flags") {
    fs::path dir = testutil::scratch_dir("cli_config");
    json file_config = {
        {"profile", "from-file-profile.json"}, {"scenarios", "from-file-scenarios.json"},
        {"env", "from-file-env.json"},         {"provider", "scripted"},
        {"script", "from-file-script.json"},   {"temperature", 0.7},
        {"max_review_iters", 5},               {"deterministic", true},
        {"run_id", "file-run"},                {"out", "file-out"},
    };
    fs::path config_path = dir / "config.json";
    std::ofstream(config_path) << file_config.dump(2);

    CliOptions options;
    options.config_path = config_path.string();
    RunConfig resolved = resolve_config(options);
    CHECK(resolved.profile_path == "from-file-profile.json");
    CHECK(resolved.temperature == 0.7);
    CHECK(resolved.loops.max_review_iters == 5);
    CHECK(resolved.loops.max_repair_iters == 3);
    CHECK(resolved.deterministic);
    CHECK(resolved.run_id == "file-run");
    CHECK(resolved.out_dir == "file-out");

    options.profile = "flag-profile.json";
    options.temperature = 0.1;
    options.out_dir = "flag-out";
    RunConfig overridden = resolve_config(options);
    CHECK(overridden.profile_path == "flag-profile.json");
    CHECK(overridden.temperature == 0.1);
    CHECK(overridden.out_dir == "flag-out");
    CHECK(overridden.scenarios_path == "from-file-scenarios.json");
  }

  TEST_CASE("config rejection cases") {
    fs::path dir = testutil::scratch_dir("cli_badconfig");

    auto with_config = [&](const json& doc) {
      fs::path path = dir / "config.json";
      std::ofstream(path) << doc.dump();
      CliOptions options;
      options.config_path = path.string();
      return options;
    };

    CHECK_THROWS_AS(resolve_config(with_config({{"profiles", "typo.json"}})), ConfigError);
    CHECK_THROWS_AS(resolve_config(with_config({{"temperature", "warm"}})), ConfigError);
    CHECK_THROWS_AS(resolve_config(with_config({{"provider", "psychic"}})), ConfigError);
    CHECK_THROWS_AS(resolve_config(with_config({{"temperature", 3.5}})), ConfigError);
    CHECK_THROWS_AS(resolve_config(with_config({{"max_review_iters", 0}})), ConfigError);
    CHECK_THROWS_AS(resolve_config(with_config({{"out", ""}})), ConfigError);
    CHECK_THROWS_AS(resolve_config(with_config(json::array({1}))), ConfigError);

    CliOptions missing;
    missing.config_path = (dir / "absent.json").string();
    CHECK_THROWS_AS(resolve_config(missing), Error);

    CliOptions bad_flag;
    bad_flag.temperature = -1.0;
    CHECK_THROWS_AS(resolve_config(bad_flag), ConfigError);
  }

  TEST_CASE("exit codes are a total function of the metrics") {
    Metrics quiet;
    CHECK(exit_code_for(quiet) == 0);

    Metrics found_and_hardened;
    found_and_hardened.risk_validated = 2;
    found_and_hardened.constraints_validated = 1;
    CHECK(exit_code_for(found_and_hardened) == 0);

    Metrics found_unhardened;
    found_unhardened.risk_validated = 1;
    found_unhardened.constraints_validated = 0;
    CHECK(exit_code_for(found_unhardened) == 2);

    Metrics identified_only;
    identified_only.workflows_identified = 3;
    CHECK(exit_code_for(identified_only) == 0);

    Metrics rejected_only;
    rejected_only.rejected_hallucination = 2;
    CHECK(exit_code_for(rejected_only) == 0);
  }

  TEST_CASE("the run lock is exclusive and released") {
    fs::path dir = testutil::scratch_dir("cli_lock");
    {
      RunLock lock(dir);
      CHECK(fs::exists(dir / "agentguard.lock"));
      CHECK_THROWS_AS(RunLock{dir}, ConfigError);
    }
    CHECK(!fs::exists(dir / "agentguard.lock"));
    CHECK_NOTHROW(RunLock{dir});
  }

  TEST_CASE("evaluate writes every artifact and summarizes the run") {
    fs::path out = testutil::scratch_dir("cli_evaluate");
    CliOptions options = fixture_options("full_run.json", out);
    CaptureCout captured;
    int code = cmd_evaluate(options);
    CHECK(code == 0);
    CHECK(captured.text().find("identified=2 rejected=1 risk_validated=2 "
                               "constraints_validated=2 unsafe_before=2 unsafe_after=0") !=
          std::string::npos);

    for (const char* name : {"workflows.json", "testcases.json", "constraints.json",
                             "report.json", "report.md", "selinux_bundle.txt"}) {
      CHECK(fs::exists(out / name));
    }
    CHECK(!fs::exists(out / "agentguard.lock"));

    EvaluationReport report = parse_report(slurp(out / "report.json"));
    CHECK(report.metrics.constraints_validated == 2);
    CHECK(slurp(out / "report.md") == render_markdown(report));
    CHECK(slurp(out / "selinux_bundle.txt") ==
          export_selinux_bundle(report, report_label_plan(report)));
  }

  TEST_CASE("unhardened risks surface as exit code 2") {
    fs::path out = testutil::scratch_dir("cli_unhardened");
    CliOptions options = fixture_options("no_harden.json", out);
    CaptureCout captured;
    CHECK(cmd_evaluate(options) == 2);
  }

  TEST_CASE("chained phases reproduce the one-shot artifacts") {
    fs::path one_shot_dir = testutil::scratch_dir("cli_oneshot");
    CliOptions one_shot = fixture_options("full_run.json", one_shot_dir);
    {
      CaptureCout captured;
      CHECK(cmd_evaluate(one_shot) == 0);
    }

    fs::path chained_dir = testutil::scratch_dir("cli_chained");
    CliOptions chained = fixture_options("full_run.json", chained_dir);
    {
      CaptureCout captured;
      CHECK(cmd_phase(chained, "identify") == 0);
      CHECK(cmd_phase(chained, "validate") == 0);
      CHECK(cmd_phase(chained, "harden") == 0);
      CHECK(cmd_phase(chained, "verify") == 0);
    }

    for (const char* name : {"workflows.json", "testcases.json", "constraints.json",
                             "report.json", "report.md", "selinux_bundle.txt"}) {
      CHECK(slurp(one_shot_dir / name) == slurp(chained_dir / name));
    }
  }

  TEST_CASE("phases demand their predecessor's artifact") {
    fs::path out = testutil::scratch_dir("cli_missing");
    CliOptions options = fixture_options("full_run.json", out);
    try {
      cmd_phase(options, "validate");
      FAIL("expected MissingArtifact");
    } catch (const MissingArtifact& e) {
      CHECK(e.file().find("workflows.json") != std::string::npos);
    }
    CHECK_THROWS_AS(cmd_phase(options, "harden"), MissingArtifact);
    CHECK_THROWS_AS(cmd_phase(options, "deploy"), ConfigError);
    CHECK(!fs::exists(out / "agentguard.lock"));
  }

  TEST_CASE("report command renders the stored report") {
    fs::path out = testutil::scratch_dir("cli_report");
    CliOptions options = fixture_options("full_run.json", out);
    {
      CaptureCout captured;
      CHECK(cmd_evaluate(options) == 0);
    }

    {
      CaptureCout captured;
      CHECK(cmd_report(options, "markdown") == 0);
      CHECK(captured.text() == slurp(out / "report.md"));
    }
    {
      CaptureCout captured;
      CHECK(cmd_report(options, "selinux") == 0);
      CHECK(captured.text() == slurp(out / "selinux_bundle.txt"));
    }
    CHECK_THROWS_AS(cmd_report(options, "pdf"), ConfigError);

    CliOptions elsewhere = fixture_options("full_run.json",
                                           testutil::scratch_dir("cli_report_empty"));
    CHECK_THROWS_AS(cmd_report(elsewhere, "markdown"), MissingArtifact);
  }

  TEST_CASE("the binary wires the commands together") {
    CHECK(run_cli("--help > /dev/null 2>&1") == 0);
    CHECK(run_cli("> /dev/null 2>&1") != 0);

    fs::path out = testutil::scratch_dir("cli_binary");
    auto fixtures = testutil::fixtures_dir();
    std::string common = "--profile " + (fixtures / "profiles" / "coding_agent.json").string() +
                         " --scenarios " + (fixtures / "scenarios" / "coding_tasks.json").string() +
                         " --env " + (fixtures / "envs" / "workspace.json").string() +
                         " --provider scripted --deterministic --out " + out.string();

    CHECK(run_cli("evaluate " + common + " --script " +
                  (fixtures / "scripts" / "full_run.json").string() + " > /dev/null 2>&1") == 0);
    CHECK(fs::exists(out / "report.json"));

    fs::path stderr_file = out / "stderr.txt";
    CHECK(run_cli("evaluate --profile /nonexistent.json --scenarios x --env y --out " +
                  (out / "broken").string() + " 2> " + stderr_file.string() + " > /dev/null") ==
          1);
    CHECK(slurp(stderr_file).find("error: ") == 0);

    fs::path exhausted = testutil::scratch_dir("cli_binary_code2");
    CHECK(run_cli("evaluate " + common.substr(0, common.find("--out")) + " --out " +
                  exhausted.string() + " --script " +
                  (fixtures / "scripts" / "no_harden.json").string() + " > /dev/null 2>&1") == 2);
  }

  TEST_CASE("the bundled example config drives a full run") {
    fs::path out = testutil::scratch_dir("cli_example_config");
    fs::path repo_root = testutil::fixtures_dir().parent_path();
    std::string command = "cd " + repo_root.string() + " && " + AGENTGUARD_TEST_CLI +
                          " evaluate --config fixtures/configs/example.json --out " +
                          out.string() + " > /dev/null 2>&1";
    int status = std::system(command.c_str());
    REQUIRE(status != -1);
    CHECK(WEXITSTATUS(status) == 0);
    CHECK(fs::exists(out / "report.json"));
  }
}
