#include "agentguard/json_util.hpp"

#include <cstdint>
#include <ctime>
#include <fstream>
#include <sstream>

#include "agentguard/errors.hpp"

namespace agentguard {

nlohmann::json parse_json(const std::string& text, const std::string& what) {
  nlohmann::json parsed = nlohmann::json::parse(text, nullptr, false);
  if (parsed.is_discarded()) {
    throw ParseError(what + " is not valid JSON");
  }
  return parsed;
}

namespace {

std::optional<nlohmann::json> extract_first_json(const std::string& text, char open, char close) {
  for (std::size_t i = text.find(open); i != std::string::npos; i = text.find(open, i + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t j = i; j < text.size(); ++j) {
      char c = text[j];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == open) {
        ++depth;
      } else if (c == close) {
        if (--depth == 0) {
          nlohmann::json parsed = nlohmann::json::parse(text.substr(i, j - i + 1), nullptr, false);
          if (!parsed.is_discarded()) {
            return parsed;
          }
          break;
        }
      }
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<nlohmann::json> extract_first_json_array(const std::string& text) {
  return extract_first_json(text, '[', ']');
}

std::optional<nlohmann::json> extract_first_json_object(const std::string& text) {
  return extract_first_json(text, '{', '}');
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot read file: " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ConfigError("cannot write file: " + path.string());
  }
  out << content;
  if (!out) {
    throw ConfigError("write failed: " + path.string());
  }
}

std::string fnv1a64_hex(std::string_view data) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[hash & 0xf];
    hash >>= 4;
  }
  return out;
}

std::string rfc3339_utc_now() {
  std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buffer;
}

}  // namespace agentguard
