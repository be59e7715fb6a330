#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dula {

/// Flat `section.key = value` configuration.
///
/// Lines are `key = value`, `[section]` headers prefix the following keys with
/// `section.`, and `#` starts a comment outside quotes. Values are numbers,
/// booleans, double-quoted strings or bracketed lists (`[1, 2]`, `[[0,1],[1,2]]`).
class Config {
 public:
  struct Entry {
    std::string value;  // normalized text, quotes removed for strings
    std::size_t line = 0;
  };

  static Config parse(std::istream& in);
  static Config parse_string(const std::string& text);
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, std::string value);

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key) const;
  std::vector<std::pair<std::size_t, std::size_t>> get_pairs(const std::string& key) const;

  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }
  /// Keys never read through a getter.
  std::vector<std::string> unused_keys() const;

  /// Canonical `key=value` lines sorted by key.
  std::string canonical() const;
  /// FNV-1a 64 of canonical(), as 16 hex digits.
  std::string hash() const;

 private:
  const Entry& require(const std::string& key) const;

  std::map<std::string, Entry> entries_;
  mutable std::map<std::string, bool> used_;
};

std::uint64_t fnv1a64(const std::string& bytes) noexcept;

}  // namespace dula
