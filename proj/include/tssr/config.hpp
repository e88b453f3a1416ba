#pragma once

#include <map>
#include <string>
#include <string_view>

namespace tssr {

/// Flat `section.key -> value` view of a config file:
///
///   # comment
///   [train]
///   steps = 500
///
/// Keys before any section header live under the empty section ("key").
using ConfigValues = std::map<std::string, std::string>;

ConfigValues parse_config(std::string_view text);
ConfigValues load_config(const std::string& path);

/// Typed lookups; a present but malformed value is a ValidationError that
/// names the key.
int config_int(const ConfigValues& cfg, const std::string& key, int fallback);
long long config_int64(const ConfigValues& cfg, const std::string& key, long long fallback);
double config_double(const ConfigValues& cfg, const std::string& key, double fallback);
bool config_bool(const ConfigValues& cfg, const std::string& key, bool fallback);
std::string config_string(const ConfigValues& cfg, const std::string& key, const std::string& fallback);

}  // namespace tssr
