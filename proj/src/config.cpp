#include "wahnerf/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "wahnerf/error.hpp"

namespace wah {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw FormatError("config key '" + key + "': '" + value + "' is not " + what);
}

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& source) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw FormatError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw FormatError(where + ": empty key");
    if (!kv.emplace(key, value).second) throw FormatError(where + ": duplicate key '" + key + "'");
  }
  return kv;
}

KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path);
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

bool take(KeyValues& kv, const std::string& key, double& out) {
  auto it = kv.find(key);
  if (it == kv.end()) return false;
  const std::string& s = it->second;
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) bad_value(key, s, "a number");
  out = v;
  kv.erase(it);
  return true;
}

bool take(KeyValues& kv, const std::string& key, std::size_t& out) {
  auto it = kv.find(key);
  if (it == kv.end()) return false;
  const std::string& s = it->second;
  std::size_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) bad_value(key, s, "a non-negative integer");
  out = v;
  kv.erase(it);
  return true;
}

bool take(KeyValues& kv, const std::string& key, int& out) {
  auto it = kv.find(key);
  if (it == kv.end()) return false;
  const std::string& s = it->second;
  int v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) bad_value(key, s, "an integer");
  out = v;
  kv.erase(it);
  return true;
}

bool take(KeyValues& kv, const std::string& key, bool& out) {
  auto it = kv.find(key);
  if (it == kv.end()) return false;
  const std::string& s = it->second;
  if (s == "true" || s == "1" || s == "on") {
    out = true;
  } else if (s == "false" || s == "0" || s == "off") {
    out = false;
  } else {
    bad_value(key, s, "a boolean");
  }
  kv.erase(it);
  return true;
}

bool take(KeyValues& kv, const std::string& key, std::string& out) {
  auto it = kv.find(key);
  if (it == kv.end()) return false;
  out = it->second;
  kv.erase(it);
  return true;
}

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace wah
