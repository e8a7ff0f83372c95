#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "agentguard/pipeline.hpp"
#include "agentguard/report.hpp"

namespace agentguard {

// Option values exactly as given on the command line; empty or unset means the
// flag was not passed. Flags override config-file values, which override the
// built-in defaults.
struct CliOptions {
  std::string config_path;
  std::string profile;
  std::string scenarios;
  std::string env;
  std::string provider;
  std::string script;
  std::string endpoint;
  std::string model;
  std::optional<double> temperature;
  std::optional<int> max_review_iters;
  std::optional<int> max_repair_iters;
  bool deterministic = false;
  std::string out_dir;
};

RunConfig resolve_config(const CliOptions& options);

// Exit code as a total function of the final metrics: 0 when at least one
// constraint set validated or nothing was identified, 2 when validated risks
// remain unhardened, 0 otherwise. Fatal configuration problems exit 1 before
// a report exists.
int exit_code_for(const Metrics& metrics);

// Creates <dir>/agentguard.lock exclusively and removes it on destruction;
// a second concurrent run against the same directory fails with ConfigError.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

int cmd_evaluate(const CliOptions& options);
int cmd_phase(const CliOptions& options, const std::string& phase);
int cmd_report(const CliOptions& options, const std::string& format);

}  // namespace agentguard
