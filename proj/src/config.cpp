#include "tssr/config.hpp"

#include "tssr/codec.hpp"
#include "tssr/error.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <sstream>

namespace tssr {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

const std::string* lookup(const ConfigValues& cfg, const std::string& key) {
  const auto it = cfg.find(key);
  return it == cfg.end() ? nullptr : &it->second;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* want) {
  throw ValidationError("config '" + key + "': expected " + want + ", got '" + value + "'");
}

}  // namespace

ConfigValues parse_config(std::string_view text) {
  ConfigValues out;
  std::string section;
  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ValidationError("config line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
    out[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
  }
  return out;
}

ConfigValues load_config(const std::string& path) { return parse_config(read_file_bytes(path)); }

long long config_int64(const ConfigValues& cfg, const std::string& key, long long fallback) {
  const std::string* v = lookup(cfg, key);
  if (!v) return fallback;
  long long out = 0;
  const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size()) bad(key, *v, "an integer");
  return out;
}

int config_int(const ConfigValues& cfg, const std::string& key, int fallback) {
  const long long v = config_int64(cfg, key, fallback);
  if (v < -2147483647LL || v > 2147483647LL) bad(key, std::to_string(v), "a 32-bit integer");
  return static_cast<int>(v);
}

double config_double(const ConfigValues& cfg, const std::string& key, double fallback) {
  const std::string* v = lookup(cfg, key);
  if (!v) return fallback;
  char* end = nullptr;
  const double out = std::strtod(v->c_str(), &end);
  if (v->empty() || end != v->c_str() + v->size()) bad(key, *v, "a number");
  return out;
}

bool config_bool(const ConfigValues& cfg, const std::string& key, bool fallback) {
  const std::string* v = lookup(cfg, key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "on" || *v == "yes") return true;
  if (*v == "0" || *v == "false" || *v == "off" || *v == "no") return false;
  bad(key, *v, "a boolean");
}

std::string config_string(const ConfigValues& cfg, const std::string& key, const std::string& fallback) {
  const std::string* v = lookup(cfg, key);
  return v ? *v : fallback;
}

}  // namespace tssr
