#include "evseg/kv_config.hpp"

#include <fstream>
#include <sstream>

#include "evseg/error.hpp"

namespace evseg {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
  KeyValueConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0) throw ParseError(line_no, "expected key=value");
    cfg.values_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse(in);
}

const std::string& KeyValueConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ParseError(0, "missing key '" + key + "'");
  return it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(get(key), &used);
    if (used == get(key).size()) return v;
  } catch (const std::exception&) {
  }
  throw ParseError(0, "key '" + key + "' is not a number");
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
  if (!has(key)) return fallback;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(get(key), &used);
    if (used == get(key).size()) return v;
  } catch (const std::exception&) {
  }
  throw ParseError(0, "key '" + key + "' is not an integer");
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

std::vector<std::size_t> KeyValueConfig::get_sizes(const std::string& key,
                                                   const std::vector<std::size_t>& fallback) const {
  return has(key) ? parse_size_list(get(key)) : fallback;
}

void KeyValueConfig::write(std::ostream& out) const {
  for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw ParseError(0, "bad size list '" + text + "'");
    }
    out.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + std::to_string(values[i]);
  return s;
}

}  // namespace evseg
