#include "crl/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace crl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::uint64_t fnv1a(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return from_string(buf.str());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
  KeyValueConfig cfg;
  cfg.hash_ = fnv1a(text);
  std::istringstream ss(text);
  std::string line;
  long line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
    }
    if (cfg.values_.count(key)) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": duplicate key '" +
                               key + "'");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

bool KeyValueConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) {
  consumed_.insert(key);
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string KeyValueConfig::require_string(const std::string& key) {
  consumed_.insert(key);
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::runtime_error("config: missing required key '" + key + "'");
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) {
  const std::string s = get_string(key, "");
  if (s.empty()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' is not a number: " + s);
  }
}

long KeyValueConfig::get_long(const std::string& key, long fallback) {
  const std::string s = get_string(key, "");
  if (s.empty()) return fallback;
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' is not an integer: " + s);
  }
}

int KeyValueConfig::get_int(const std::string& key, int fallback) {
  return static_cast<int>(get_long(key, fallback));
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
  const std::string s = get_string(key, "");
  if (s.empty()) return fallback;
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::runtime_error("config: key '" + key + "' is not a boolean: " + s);
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) {
  const std::string s = get_string(key, "");
  if (s.empty()) return fallback;
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' is not an unsigned integer: " + s);
  }
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key,
                                                    const std::vector<double>& fallback) {
  const std::string s = get_string(key, "");
  if (s.empty()) return fallback;
  std::vector<double> out;
  for (const std::string& part : split_commas(s)) {
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw std::runtime_error("config: key '" + key + "' has a non-numeric entry: " + part);
    }
  }
  return out;
}

std::vector<std::string> KeyValueConfig::get_string_list(
    const std::string& key, const std::vector<std::string>& fallback) {
  const std::string s = get_string(key, "");
  if (s.empty()) return fallback;
  return split_commas(s);
}

std::vector<std::uint64_t> KeyValueConfig::get_u64_list(
    const std::string& key, const std::vector<std::uint64_t>& fallback) {
  const std::string s = get_string(key, "");
  if (s.empty()) return fallback;
  std::vector<std::uint64_t> out;
  for (const std::string& part : split_commas(s)) {
    try {
      out.push_back(std::stoull(part));
    } catch (const std::exception&) {
      throw std::runtime_error("config: key '" + key + "' has a non-integer entry: " + part);
    }
  }
  return out;
}

std::vector<std::string> KeyValueConfig::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (k.rfind(prefix, 0) == 0) out.push_back(k.substr(prefix.size()));
  }
  return out;
}

void KeyValueConfig::ensure_all_consumed() const {
  std::string unknown;
  for (const auto& [k, v] : values_) {
    if (!consumed_.count(k)) {
      if (!unknown.empty()) unknown += ", ";
      unknown += k;
    }
  }
  if (!unknown.empty()) throw std::runtime_error("config: unknown keys: " + unknown);
}

}  // namespace crl
