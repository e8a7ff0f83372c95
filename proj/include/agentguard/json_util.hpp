#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace agentguard {

inline constexpr const char* kEpochTimestamp = "1970-01-01T00:00:00Z";

// Parses `text` as JSON; throws ParseError mentioning `what` on failure.
nlohmann::json parse_json(const std::string& text, const std::string& what);

// Scans free-form model output for the first syntactically valid JSON array
// (respectively object). String literals and escapes are honoured, so brackets
// inside quoted text do not confuse the bracket matching.
std::optional<nlohmann::json> extract_first_json_array(const std::string& text);
std::optional<nlohmann::json> extract_first_json_object(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

// 64-bit FNV-1a rendered as 16 hex digits. Stable across platforms; used for
// environment digests where collision resistance is not a concern.
std::string fnv1a64_hex(std::string_view data);

// Current UTC time as RFC 3339 with second precision, e.g. 2024-05-01T12:00:00Z.
std::string rfc3339_utc_now();

}  // namespace agentguard
