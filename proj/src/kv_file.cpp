// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#include "invact/kv_file.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <system_error>

namespace invact {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

void KeyValueRecord::set(std::string key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

void KeyValueRecord::set(std::string key, double value) { set(std::move(key), format_double(value)); }

bool KeyValueRecord::contains(std::string_view key) const { return find(key).has_value(); }

std::optional<std::string> KeyValueRecord::find(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const std::string& KeyValueRecord::require(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw std::invalid_argument("missing key '" + std::string(key) + "'");
}

double KeyValueRecord::require_double(std::string_view key) const {
  const auto& text = require(key);
  try {
    return parse_double(text);
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("key '" + std::string(key) + "' is not a number: " + text);
  }
}

long long KeyValueRecord::require_int(std::string_view key) const {
  const auto& text = require(key);
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::invalid_argument("key '" + std::string(key) + "' is not an integer: " + text);
  }
  return value;
}

double KeyValueRecord::get_double(std::string_view key, double fallback) const {
  return contains(key) ? require_double(key) : fallback;
}

long long KeyValueRecord::get_int(std::string_view key, long long fallback) const {
  return contains(key) ? require_int(key) : fallback;
}

std::string KeyValueRecord::get(std::string_view key, std::string fallback) const {
  auto value = find(key);
  return value ? *value : fallback;
}

std::vector<KeyValueRecord> read_records(std::istream& in) {
  std::vector<KeyValueRecord> records;
  KeyValueRecord current;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) {
      // Only a truly blank line ends a record; comment lines do not.
      if (trim(line).empty() && !current.empty()) {
        records.push_back(std::move(current));
        current = KeyValueRecord{};
      }
      continue;
    }
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key=value");
    }
    auto key = trim(view.substr(0, eq));
    auto value = trim(view.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("line " + std::to_string(line_no) + ": empty key");
    current.set(std::string(key), std::string(value));
  }
  if (!current.empty()) records.push_back(std::move(current));
  return records;
}

std::vector<KeyValueRecord> read_records_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_records(in);
}

void write_records(std::ostream& out, const std::vector<KeyValueRecord>& records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i > 0) out << '\n';
    for (const auto& [k, v] : records[i].entries()) out << k << '=' << v << '\n';
  }
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::invalid_argument("not a number: " + std::string(text));
  }
  return value;
}

}  // namespace invact
