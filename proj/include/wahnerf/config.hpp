#pragma once

#include <cstddef>
#include <map>
#include <string>

namespace wah {

/// Ordered `key = value` pairs. Text form: one pair per line, '#' starts a
/// comment, blank lines ignored, a repeated key is an error.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text, const std::string& source = "config");
KeyValues load_key_values(const std::string& path);
std::string format_key_values(const KeyValues& kv);

/// Removes `key` from `kv` and parses it into `out` if present. Throws
/// FormatError naming the key on a malformed value.
bool take(KeyValues& kv, const std::string& key, double& out);
bool take(KeyValues& kv, const std::string& key, std::size_t& out);
bool take(KeyValues& kv, const std::string& key, int& out);
bool take(KeyValues& kv, const std::string& key, bool& out);
bool take(KeyValues& kv, const std::string& key, std::string& out);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace wah
