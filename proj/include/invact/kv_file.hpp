// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace invact {

// One block of `key=value` lines. Files hold one or more records separated by
// blank lines; `#` starts a comment.
class KeyValueRecord {
 public:
  void set(std::string key, std::string value);
  void set(std::string key, double value);

  bool contains(std::string_view key) const;
  std::optional<std::string> find(std::string_view key) const;

  // Throws std::invalid_argument naming the key when absent or malformed.
  const std::string& require(std::string_view key) const;
  double require_double(std::string_view key) const;
  long long require_int(std::string_view key) const;

  double get_double(std::string_view key, double fallback) const;
  long long get_int(std::string_view key, long long fallback) const;
  std::string get(std::string_view key, std::string fallback) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::vector<KeyValueRecord> read_records(std::istream& in);
std::vector<KeyValueRecord> read_records_file(const std::string& path);
void write_records(std::ostream& out, const std::vector<KeyValueRecord>& records);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

}  // namespace invact
