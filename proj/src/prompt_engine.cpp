#include "agentguard/prompt_engine.hpp"

#include <cctype>

#include <nlohmann/json.hpp>

#include "agentguard/errors.hpp"
#include "agentguard/json_util.hpp"

namespace agentguard {

namespace {

bool is_placeholder_start(char c) {
  return c == '_' || std::isalpha(static_cast<unsigned char>(c));
}

bool is_placeholder_char(char c) {
  return c == '_' || std::isalnum(static_cast<unsigned char>(c));
}

// Finds the next {identifier} group at or after `pos`. Returns the position of
// the opening brace and writes the identifier, or npos when none remains.
std::size_t next_placeholder(const std::string& body, std::size_t pos, std::string& name) {
  while (pos < body.size()) {
    pos = body.find('{', pos);
    if (pos == std::string::npos) return std::string::npos;
    std::size_t i = pos + 1;
    if (i < body.size() && is_placeholder_start(body[i])) {
      std::size_t start = i;
      while (i < body.size() && is_placeholder_char(body[i])) ++i;
      if (i < body.size() && body[i] == '}') {
        name = body.substr(start, i - start);
        return pos;
      }
    }
    ++pos;
  }
  return std::string::npos;
}

}  // namespace

std::vector<std::string> placeholders_in(const std::string& body) {
  std::vector<std::string> names;
  std::set<std::string> seen;
  std::string name;
  std::size_t pos = 0;
  while ((pos = next_placeholder(body, pos, name)) != std::string::npos) {
    if (seen.insert(name).second) {
      names.push_back(name);
    }
    pos += name.size() + 2;
  }
  return names;
}

PromptTemplate PromptTemplate::make(std::string template_id, std::string body,
                                    std::set<std::string> required_placeholders) {
  PromptTemplate tmpl{std::move(template_id), std::move(body), std::move(required_placeholders)};
  std::vector<std::string> found = placeholders_in(tmpl.body);
  std::set<std::string> found_set(found.begin(), found.end());
  for (const std::string& required : tmpl.required_placeholders) {
    if (!found_set.contains(required)) {
      throw ValidationError("template \"" + tmpl.template_id + "\": required placeholder \"" +
                            required + "\" does not occur in the body");
    }
  }
  return tmpl;
}

std::string render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& bindings,
                   const std::optional<RoleAugmentation>& augmentation,
                   const std::vector<std::string>& preamble) {
  std::string out;
  if (augmentation) {
    std::string line = kRoleAugmentationPattern;
    const std::string token = "{task}";
    line.replace(line.find(token), token.size(), augmentation->expert_task);
    out += line;
    out += '\n';
  }
  for (const std::string& line : preamble) {
    out += line;
    out += '\n';
  }

  // Single pass over the body; substituted values are emitted verbatim and
  // never rescanned, so bindings may safely contain braces.
  std::string name;
  std::size_t pos = 0;
  std::size_t copied = 0;
  while ((pos = next_placeholder(tmpl.body, pos, name)) != std::string::npos) {
    auto binding = bindings.find(name);
    if (binding == bindings.end()) {
      throw MissingBinding(name);
    }
    out.append(tmpl.body, copied, pos - copied);
    out += binding->second;
    pos += name.size() + 2;
    copied = pos;
  }
  out.append(tmpl.body, copied, tmpl.body.size() - copied);
  return out;
}

TemplateLibrary TemplateLibrary::load(const std::filesystem::path& dir) {
  const std::filesystem::path manifest_path = dir / "manifest.json";
  nlohmann::json manifest = parse_json(read_text_file(manifest_path), "template manifest");
  if (!manifest.is_object()) {
    throw ConfigError("template manifest must be a JSON object: " + manifest_path.string());
  }
  TemplateLibrary library;
  for (const auto& [template_id, entry] : manifest.items()) {
    if (!entry.is_object() || !entry.contains("path") || !entry["path"].is_string()) {
      throw ConfigError("template manifest entry \"" + template_id + "\" needs a \"path\"");
    }
    std::set<std::string> required;
    if (entry.contains("required")) {
      if (!entry["required"].is_array()) {
        throw ConfigError("template manifest entry \"" + template_id +
                          "\": \"required\" must be an array");
      }
      for (const auto& item : entry["required"]) {
        if (!item.is_string()) {
          throw ConfigError("template manifest entry \"" + template_id +
                            "\": \"required\" must contain strings");
        }
        required.insert(item.get<std::string>());
      }
    }
    const std::string body = read_text_file(dir / entry["path"].get<std::string>());
    library.templates_.emplace(template_id,
                               PromptTemplate::make(template_id, body, std::move(required)));
  }
  return library;
}

const PromptTemplate& TemplateLibrary::get(const std::string& template_id) const {
  auto entry = templates_.find(template_id);
  if (entry == templates_.end()) {
    throw ConfigError("unknown template \"" + template_id + "\"");
  }
  return entry->second;
}

bool TemplateLibrary::contains(const std::string& template_id) const {
  return templates_.contains(template_id);
}

std::string quality_control_loop(const std::function<std::string(const std::string&)>& generate,
                                 const std::function<ReviewVerdict(const std::string&)>& review,
                                 const LoopConfig& config) {
  if (config.max_review_iters < 1) {
    throw ValidationError("max_review_iters must be at least 1");
  }
  std::string feedback;
  std::string candidate;
  std::string suggestions;
  for (int iteration = 0; iteration < config.max_review_iters; ++iteration) {
    candidate = generate(feedback);
    ReviewVerdict verdict = review(candidate);
    if (verdict.passed) {
      return candidate;
    }
    suggestions = verdict.suggestions;
    if (!feedback.empty()) feedback += '\n';
    feedback += verdict.suggestions;
  }
  throw QualityExhausted(candidate, suggestions);
}

std::string repair_loop(std::string candidate,
                        const std::function<AttemptResult(const std::string&)>& attempt,
                        const std::function<std::string(const std::string&, const std::string&)>&
                            regenerate,
                        const LoopConfig& config) {
  if (config.max_repair_iters < 1) {
    throw ValidationError("max_repair_iters must be at least 1");
  }
  std::string last_error;
  for (int iteration = 0; iteration < config.max_repair_iters; ++iteration) {
    AttemptResult result = attempt(candidate);
    if (result.ok) {
      return candidate;
    }
    last_error = result.error;
    if (iteration + 1 < config.max_repair_iters) {
      candidate = regenerate(candidate, result.error);
    }
  }
  throw RepairExhausted(last_error);
}

}  // namespace agentguard
