#include "hmar/common/kv.hpp"

#include <cerrno>
#include <charconv>
#include <cstdlib>

#include "hmar/error.hpp"

namespace hmar {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<KeyValue> parse_key_values(std::string_view text, std::string_view what) {
  std::vector<KeyValue> out;
  std::size_t line = 0, start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line;
    std::string_view raw = text.substr(start, end - start);
    start = end + 1;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string body = trim(raw);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument(std::string(what) + ":" + std::to_string(line) + ": expected key = value");
    }
    KeyValue kv{trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)), line};
    if (kv.key.empty()) throw InvalidArgument(std::string(what) + ":" + std::to_string(line) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

long long parse_int(std::string_view value, std::string_view key) {
  const std::string v = trim(value);
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || p != v.data() + v.size()) {
    throw InvalidArgument(std::string(key) + ": expected an integer, got \"" + v + "\"");
  }
  return out;
}

std::size_t parse_size(std::string_view value, std::string_view key) {
  const long long v = parse_int(value, key);
  if (v < 0) throw InvalidArgument(std::string(key) + ": must be non-negative");
  return static_cast<std::size_t>(v);
}

double parse_double(std::string_view value, std::string_view key) {
  const std::string v = trim(value);
  char* end = nullptr;
  errno = 0;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) {
    throw InvalidArgument(std::string(key) + ": expected a number, got \"" + v + "\"");
  }
  return out;
}

bool parse_bool(std::string_view value, std::string_view key) {
  const std::string v = trim(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidArgument(std::string(key) + ": expected true/false, got \"" + v + "\"");
}

}  // namespace hmar
