#include "dula/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dula/error.hpp"

namespace dula {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
  }
  return key.front() != '.' && key.back() != '.';
}

std::string normalize_value(const std::string& raw, std::size_t line) {
  if (raw.empty()) throw ParseError(line, "missing value");
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"') throw ParseError(line, "unterminated string");
    return raw.substr(1, raw.size() - 2);
  }
  if (raw.front() == '[') {
    int depth = 0;
    std::string out;
    for (char c : raw) {
      if (c == '[') ++depth;
      if (c == ']') --depth;
      if (depth < 0) throw ParseError(line, "unbalanced brackets");
      if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    }
    if (depth != 0) throw ParseError(line, "unbalanced brackets");
    return out;
  }
  return raw;
}

double to_double(const std::string& text, const std::string& key) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw InvalidParameter(key + ": not a number: " + text);
  return v;
}

std::vector<std::string> split_top_level(const std::string& list, const std::string& key) {
  if (list.size() < 2 || list.front() != '[' || list.back() != ']') {
    throw InvalidParameter(key + ": expected a bracketed list");
  }
  std::vector<std::string> items;
  const std::string inner = list.substr(1, list.size() - 2);
  int depth = 0;
  std::string cur;
  for (char c : inner) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0) {
      items.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) items.push_back(cur);
  return items;
}

}  // namespace

Config Config::parse(std::istream& in) {
  Config cfg;
  std::string section;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[' && line.find('=') == std::string::npos) {
      if (line.back() != ']') throw ParseError(line_no, "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!section.empty() && !valid_key(section)) throw ParseError(line_no, "bad section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) throw ParseError(line_no, "bad key '" + key + "'");
    if (!section.empty()) key = section + "." + key;
    if (cfg.entries_.count(key)) throw ParseError(line_no, "duplicate key '" + key + "'");
    cfg.entries_[key] = Entry{normalize_value(trim(line.substr(eq + 1)), line_no), line_no};
  }
  return cfg;
}

Config Config::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse(in);
}

void Config::set(const std::string& key, std::string value) {
  if (!valid_key(key)) throw InvalidParameter("bad key '" + key + "'");
  entries_[key] = Entry{std::move(value), 0};
}

const Config::Entry& Config::require(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw InvalidParameter("missing config key '" + key + "'");
  used_[key] = true;
  return it->second;
}

std::string Config::get_string(const std::string& key) const { return require(key).value; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double Config::get_double(const std::string& key) const { return to_double(require(key).value, key); }

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::uint64_t Config::get_uint(const std::string& key) const {
  const std::string& text = require(key).value;
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec == std::errc() && ptr == end) return v;
  // Accept integral scientific notation such as 2e5.
  const double d = to_double(text, key);
  if (d < 0 || d != static_cast<double>(static_cast<std::uint64_t>(d))) {
    throw InvalidParameter(key + ": not a nonnegative integer: " + text);
  }
  return static_cast<std::uint64_t>(d);
}

std::uint64_t Config::get_uint(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? get_uint(key) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = require(key).value;
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidParameter(key + ": not a boolean: " + v);
}

std::vector<double> Config::get_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_top_level(require(key).value, key)) out.push_back(to_double(item, key));
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> Config::get_pairs(const std::string& key) const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& item : split_top_level(require(key).value, key)) {
    const auto pair = split_top_level(item, key);
    if (pair.size() != 2) throw InvalidParameter(key + ": expected [i,j] pairs");
    const double i = to_double(pair[0], key);
    const double j = to_double(pair[1], key);
    if (i < 0 || j < 0 || i != static_cast<std::size_t>(i) || j != static_cast<std::size_t>(j)) {
      throw InvalidParameter(key + ": indices must be nonnegative integers");
    }
    out.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  }
  return out;
}

std::vector<std::string> Config::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, entry] : entries_) {
    if (!used_.count(key)) out.push_back(key);
  }
  return out;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [key, entry] : entries_) out += key + "=" + entry.value + "\n";
  return out;
}

std::uint64_t fnv1a64(const std::string& bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string Config::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
  return buf;
}

}  // namespace dula
