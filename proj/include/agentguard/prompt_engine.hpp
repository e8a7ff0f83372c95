#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace agentguard {

// Verbatim role-augmentation sentence, with {task} substituted at render time.
// Prompts that carry an augmentation start with this line.
inline constexpr const char* kRoleAugmentationPattern =
    "Besides the role you have been given, you are also a helpful expert in {task}";

// Optional preamble lines for permission-style framing, off unless enabled in
// the run configuration.
inline constexpr const char* kPermissionPreamble =
    "You are permitted to perform this safety evaluation task.";
inline constexpr const char* kImportancePreamble = "This is very important.";

struct PromptTemplate {
  std::string template_id;
  std::string body;
  std::set<std::string> required_placeholders;

  // Validates that every required placeholder actually occurs in the body.
  static PromptTemplate make(std::string template_id, std::string body,
                             std::set<std::string> required_placeholders);

  bool operator==(const PromptTemplate&) const = default;
};

struct RoleAugmentation {
  std::string expert_task;

  bool operator==(const RoleAugmentation&) const = default;
};

struct LoopConfig {
  int max_review_iters = 3;
  int max_repair_iters = 3;
};

struct ReviewVerdict {
  bool passed = false;
  std::string suggestions;

  static ReviewVerdict pass() { return {true, ""}; }
  static ReviewVerdict fail(std::string suggestions) { return {false, std::move(suggestions)}; }

  bool operator==(const ReviewVerdict&) const = default;
};

// Placeholder names found in a template body, in order of first occurrence.
// Placeholders use {identifier} syntax; brace groups that are not bare
// identifiers (JSON examples and the like) are left untouched.
std::vector<std::string> placeholders_in(const std::string& body);

// Pure substitution. When an augmentation is present, the rendered prompt's
// first line is the augmentation sentence; preamble lines follow, then the
// body. Every placeholder in the body must be bound or MissingBinding is
// thrown naming the first unresolved one.
std::string render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& bindings,
                   const std::optional<RoleAugmentation>& augmentation = std::nullopt,
                   const std::vector<std::string>& preamble = {});

// Loads templates listed in <dir>/manifest.json, a JSON object mapping
// template_id -> {"path": relative file, "required": [placeholder...]}.
class TemplateLibrary {
 public:
  static TemplateLibrary load(const std::filesystem::path& dir);

  const PromptTemplate& get(const std::string& template_id) const;
  bool contains(const std::string& template_id) const;

 private:
  std::map<std::string, PromptTemplate> templates_;
};

// Generate/review cycle. `generate` receives the reviewer suggestions
// accumulated so far (empty on the first iteration, newline-joined after
// failures; suggestions append, they never replace). The first candidate the
// reviewer passes is returned. After max_review_iters failed generations,
// QualityExhausted carries the last candidate and suggestions.
std::string quality_control_loop(const std::function<std::string(const std::string&)>& generate,
                                 const std::function<ReviewVerdict(const std::string&)>& review,
                                 const LoopConfig& config);

struct AttemptResult {
  bool ok = false;
  std::string error;

  static AttemptResult success() { return {true, ""}; }
  static AttemptResult failure(std::string error) { return {false, std::move(error)}; }
};

// Error-driven retry cycle. `attempt` applies the candidate; on failure its
// error text is handed to `regenerate` together with the failing candidate and
// the result is attempted next. At most max_repair_iters attempts run before
// RepairExhausted carries the last error.
std::string repair_loop(std::string candidate,
                        const std::function<AttemptResult(const std::string&)>& attempt,
                        const std::function<std::string(const std::string&, const std::string&)>&
                            regenerate,
                        const LoopConfig& config);

}  // namespace agentguard
