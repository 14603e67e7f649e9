#pragma once

#include <map>
#include <string>
#include <vector>

namespace stablesde {

// Flat key-value configuration with [section] headers; no nesting. Keys are
// addressed as "section.key". Values are strings; typed getters parse on
// access. Later assignments (e.g. CLI overrides) win.
class FlatConfig {
 public:
  static FlatConfig from_file(const std::string& path);
  static FlatConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::vector<double> get_list(const std::string& key) const;  // comma separated
  std::vector<double> get_list(const std::string& key,
                               const std::vector<double>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace stablesde
