#include "stablesde/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stablesde {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

FlatConfig FlatConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_string(ss.str());
}

FlatConfig FlatConfig::from_string(const std::string& text) {
  FlatConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(lineno) +
                               " is not 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config: empty key at line " +
                               std::to_string(lineno));
    cfg.set(section.empty() ? key : section + "." + key, val);
  }
  return cfg;
}

void FlatConfig::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

bool FlatConfig::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string FlatConfig::get_string(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) throw std::runtime_error("config: missing key " + key);
  return it->second;
}

std::string FlatConfig::get_string(const std::string& key,
                                   const std::string& fallback) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double FlatConfig::get_double(const std::string& key) const {
  const std::string v = get_string(key);
  std::size_t pos = 0;
  const double x = std::stod(v, &pos);
  if (pos != v.size())
    throw std::runtime_error("config: key " + key + " is not a number: " + v);
  return x;
}

double FlatConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long FlatConfig::get_int(const std::string& key) const {
  const std::string v = get_string(key);
  std::size_t pos = 0;
  const long long x = std::stoll(v, &pos);
  if (pos != v.size())
    throw std::runtime_error("config: key " + key + " is not an integer: " + v);
  return x;
}

long long FlatConfig::get_int(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::vector<double> FlatConfig::get_list(const std::string& key) const {
  const std::string v = get_string(key);
  std::vector<double> out;
  std::istringstream in(v);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    const std::string t = trim(tok);
    if (t.empty()) continue;
    out.push_back(std::stod(t));
  }
  if (out.empty())
    throw std::runtime_error("config: key " + key + " has no values");
  return out;
}

std::vector<double> FlatConfig::get_list(
    const std::string& key, const std::vector<double>& fallback) const {
  return has(key) ? get_list(key) : fallback;
}

}  // namespace stablesde
