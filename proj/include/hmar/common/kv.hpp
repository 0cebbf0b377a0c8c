#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hmar {

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// Parses "key = value" lines. '#' starts a comment; blank lines are skipped.
// A line without '=' throws InvalidArgument naming the line number.
std::vector<KeyValue> parse_key_values(std::string_view text, std::string_view what = "config");

std::string trim(std::string_view s);

// Strict numeric conversions; the error names `key`.
long long parse_int(std::string_view value, std::string_view key);
std::size_t parse_size(std::string_view value, std::string_view key);
double parse_double(std::string_view value, std::string_view key);
bool parse_bool(std::string_view value, std::string_view key);

}  // namespace hmar
