#pragma once

// Flat `key=value` text with `#` comments. Keys keep file order.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace hidfd {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Throws ConfigError on a malformed line (missing '=' or empty key) or a
// duplicated key.
KeyValues parse_key_values(const std::string& text, const std::string& origin = "<string>");
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// nullptr when absent.
const std::string* find_value(const KeyValues& kv, const std::string& key);
const std::string& require_value(const KeyValues& kv, const std::string& key,
                                 const std::string& origin);

// Shortest decimal form that reads back bit-exactly (%.17g).
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& what);
std::uint64_t parse_u64(const std::string& s, const std::string& what);
std::vector<std::string> split(const std::string& s, char sep);

}  // namespace hidfd
