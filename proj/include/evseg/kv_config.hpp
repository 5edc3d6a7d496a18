#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace evseg {

/// Flat "key=value" configuration. Lines starting with '#' and blank lines
/// are ignored; whitespace around keys and values is trimmed.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in);
  static KeyValueConfig read_file(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key,
                                     const std::vector<std::size_t>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  void write(std::ostream& out) const;

 private:
  std::map<std::string, std::string> values_;
};

std::vector<std::size_t> parse_size_list(const std::string& text);
std::string join_sizes(const std::vector<std::size_t>& values);

}  // namespace evseg
