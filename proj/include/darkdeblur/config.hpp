#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace darkdeblur {

/// Flat `key = value` text: one entry per line, '#' starts a comment line,
/// keys are unique. Serialisation is sorted by key, so equal contents always
/// render to identical text.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, const std::string& origin = "<config>");
  static KeyValues load(const std::filesystem::path& path);

  std::string to_text() const;

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Typed parsing helpers; all throw ConfigError naming the key on bad input.
double parse_double(const std::string& key, const std::string& value);
long long parse_int(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
std::vector<long long> parse_int_list(const std::string& key, const std::string& value);

std::string format_double(double v);

}  // namespace darkdeblur
