#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace agentguard {

enum class ChatRole { system, user, assistant };

std::string to_string(ChatRole role);

struct ChatMessage {
  ChatRole role = ChatRole::user;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

// One completion call. The logical_key identifies the call site within the
// pipeline (e.g. "phase2/wf-003") so scripted runs can be replayed
// deterministically regardless of prompt wording.
struct CompletionRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 4096;
  std::string logical_key;
};

// Throws ValidationError unless the request is well formed: at least one
// message, non-empty content on system/user messages, temperature within
// [0, 2], positive max_tokens.
void validate(const CompletionRequest& request);

class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
};

// Deterministic provider that replays canned responses. Responses are grouped
// by logical key; repeated calls under one key consume the key's list in
// order. Cursor state is guarded so concurrent callers each receive a distinct
// response.
class ScriptedProvider final : public CompletionProvider {
 public:
  explicit ScriptedProvider(std::map<std::string, std::vector<std::string>> script);

  // Script files are JSON objects mapping logical key -> array of strings.
  static std::shared_ptr<ScriptedProvider> from_json(const nlohmann::json& doc);
  static std::shared_ptr<ScriptedProvider> load(const std::filesystem::path& path);

  std::string complete(const CompletionRequest& request) override;

  std::size_t remaining(const std::string& logical_key) const;

 private:
  std::map<std::string, std::vector<std::string>> script_;
  std::map<std::string, std::size_t> cursor_;
  mutable std::mutex mutex_;
};

struct RetryPolicy {
  int attempts = 3;
  int base_delay_ms = 500;  // doubles after every failed attempt
};

struct RemoteConfig {
  std::string url;  // full chat-completions URL, e.g. http://host:8080/v1/chat/completions
  std::string model = "gpt-4o";
  std::string api_key_env = "AGENTGUARD_API_KEY";
  RetryPolicy retry;
};

// OpenAI-compatible chat-completions client. Sends model/messages/temperature/
// max_tokens, reads the first choice's message content. Transient transport
// failures (connection errors, 5xx) are retried per RetryPolicy before a
// TransportError carrying the attempt count is thrown. 401/403 raise AuthError
// without retry, as does a missing credential.
class RemoteProvider final : public CompletionProvider {
 public:
  explicit RemoteProvider(RemoteConfig config);

  std::string complete(const CompletionRequest& request) override;

 private:
  RemoteConfig config_;
  std::string scheme_;
  std::string host_port_;
  std::string path_;
};

}  // namespace agentguard
