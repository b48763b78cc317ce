#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace crl {

// Flat `key = value` configuration file. '#' starts a comment. Every key must
// be consumed by a typed getter; leftovers are reported as errors so typos
// never pass silently.
class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback);
  std::string require_string(const std::string& key);
  double get_double(const std::string& key, double fallback);
  long get_long(const std::string& key, long fallback);
  int get_int(const std::string& key, int fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback);
  std::vector<std::string> get_string_list(const std::string& key,
                                           const std::vector<std::string>& fallback);
  std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                          const std::vector<std::uint64_t>& fallback);

  // Keys sharing a dotted prefix, e.g. "grid.weights." -> trailing parts.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  // Throws listing every key no getter asked for.
  void ensure_all_consumed() const;

  // FNV-1a over the raw file content; identifies the configuration in
  // checkpoints and manifests.
  std::uint64_t content_hash() const { return hash_; }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
  std::uint64_t hash_ = 0;
};

}  // namespace crl
