#include "agentguard/llm_gateway.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "agentguard/errors.hpp"
#include "agentguard/json_util.hpp"

namespace agentguard {

std::string to_string(ChatRole role) {
  switch (role) {
    case ChatRole::system: return "system";
    case ChatRole::user: return "user";
    case ChatRole::assistant: return "assistant";
  }
  return "user";
}

void validate(const CompletionRequest& request) {
  if (request.messages.empty()) {
    throw ValidationError("completion request has no messages");
  }
  for (const ChatMessage& message : request.messages) {
    if (message.content.empty() && message.role != ChatRole::assistant) {
      throw ValidationError("completion request has an empty " + to_string(message.role) +
                            " message");
    }
  }
  if (request.temperature < 0.0 || request.temperature > 2.0) {
    throw ValidationError("temperature must lie in [0, 2]");
  }
  if (request.max_tokens <= 0) {
    throw ValidationError("max_tokens must be positive");
  }
}

ScriptedProvider::ScriptedProvider(std::map<std::string, std::vector<std::string>> script)
    : script_(std::move(script)) {}

std::shared_ptr<ScriptedProvider> ScriptedProvider::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) {
    throw ValidationError("script document must be a JSON object of response arrays");
  }
  std::map<std::string, std::vector<std::string>> script;
  for (const auto& [key, value] : doc.items()) {
    if (!value.is_array()) {
      throw ValidationError("script entry \"" + key + "\" must be an array of strings");
    }
    std::vector<std::string> responses;
    for (const auto& item : value) {
      if (!item.is_string()) {
        throw ValidationError("script entry \"" + key + "\" must contain only strings");
      }
      responses.push_back(item.get<std::string>());
    }
    script.emplace(key, std::move(responses));
  }
  return std::make_shared<ScriptedProvider>(std::move(script));
}

std::shared_ptr<ScriptedProvider> ScriptedProvider::load(const std::filesystem::path& path) {
  return from_json(parse_json(read_text_file(path), "script file " + path.string()));
}

std::string ScriptedProvider::complete(const CompletionRequest& request) {
  validate(request);
  std::lock_guard<std::mutex> lock(mutex_);
  auto entry = script_.find(request.logical_key);
  if (entry == script_.end()) {
    throw ScriptExhausted(request.logical_key,
                          "no scripted responses for logical key \"" + request.logical_key + "\"");
  }
  std::size_t& cursor = cursor_[request.logical_key];
  if (cursor >= entry->second.size()) {
    throw ScriptExhausted(request.logical_key,
                          "scripted responses exhausted for logical key \"" + request.logical_key +
                              "\" after " + std::to_string(cursor) + " responses");
  }
  return entry->second[cursor++];
}

std::size_t ScriptedProvider::remaining(const std::string& logical_key) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto entry = script_.find(logical_key);
  if (entry == script_.end()) return 0;
  auto cursor = cursor_.find(logical_key);
  std::size_t used = cursor == cursor_.end() ? 0 : cursor->second;
  return entry->second.size() - std::min(entry->second.size(), used);
}

namespace {

struct ParsedUrl {
  std::string scheme;
  std::string host_port;
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint URL must include a scheme: " + url);
  }
  ParsedUrl parsed;
  parsed.scheme = url.substr(0, scheme_end);
  if (parsed.scheme != "http" && parsed.scheme != "https") {
    throw ConfigError("unsupported endpoint scheme \"" + parsed.scheme + "\"");
  }
  auto rest = url.substr(scheme_end + 3);
  auto path_start = rest.find('/');
  if (path_start == std::string::npos) {
    parsed.host_port = rest;
    parsed.path = "/v1/chat/completions";
  } else {
    parsed.host_port = rest.substr(0, path_start);
    parsed.path = rest.substr(path_start);
  }
  if (parsed.host_port.empty()) {
    throw ConfigError("endpoint URL has no host: " + url);
  }
  return parsed;
}

}  // namespace

RemoteProvider::RemoteProvider(RemoteConfig config) : config_(std::move(config)) {
  ParsedUrl parsed = parse_url(config_.url);
  scheme_ = parsed.scheme;
  host_port_ = parsed.host_port;
  path_ = parsed.path;
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme_ == "https") {
    throw ConfigError("https endpoints require a TLS-enabled build");
  }
#endif
}

std::string RemoteProvider::complete(const CompletionRequest& request) {
  validate(request);

  const char* api_key = std::getenv(config_.api_key_env.c_str());
  if (api_key == nullptr || *api_key == '\0') {
    throw AuthError("environment variable " + config_.api_key_env + " is not set");
  }

  nlohmann::json body;
  body["model"] = config_.model;
  body["messages"] = nlohmann::json::array();
  for (const ChatMessage& message : request.messages) {
    body["messages"].push_back({{"role", to_string(message.role)}, {"content", message.content}});
  }
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  const std::string payload = body.dump();

  httplib::Client client((scheme_ + "://" + host_port_).c_str());
  client.set_connection_timeout(10, 0);
  client.set_read_timeout(60, 0);
  httplib::Headers headers = {{"Authorization", std::string("Bearer ") + api_key}};

  std::string last_error;
  const int attempts = std::max(1, config_.retry.attempts);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    if (attempt > 1 && config_.retry.base_delay_ms > 0) {
      int delay = config_.retry.base_delay_ms << (attempt - 2);
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
    auto result = client.Post(path_, headers, payload, "application/json");
    if (!result) {
      last_error = httplib::to_string(result.error());
      continue;
    }
    if (result->status == 401 || result->status == 403) {
      throw AuthError("completion endpoint rejected the credential (HTTP " +
                      std::to_string(result->status) + ")");
    }
    if (result->status >= 500) {
      last_error = "HTTP " + std::to_string(result->status);
      continue;
    }
    if (result->status != 200) {
      throw TransportError("completion endpoint returned HTTP " + std::to_string(result->status),
                           attempt);
    }
    nlohmann::json response = nlohmann::json::parse(result->body, nullptr, false);
    if (response.is_discarded() || !response.contains("choices") || !response["choices"].is_array() ||
        response["choices"].empty()) {
      throw TransportError("malformed completion response from " + config_.url, attempt);
    }
    const auto& first = response["choices"].front();
    if (!first.contains("message") || !first["message"].contains("content") ||
        !first["message"]["content"].is_string()) {
      throw TransportError("completion response has no message content", attempt);
    }
    return first["message"]["content"].get<std::string>();
  }
  throw TransportError("POST " + config_.url + " failed after " + std::to_string(attempts) +
                           " attempts: " + last_error,
                       attempts);
}

}  // namespace agentguard
