#include "hmar/msvq/schedule.hpp"

#include <algorithm>
#include <charconv>

#include "hmar/error.hpp"

namespace hmar {
namespace {

std::size_t parse_count(std::string_view s, std::string_view whole) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw InvalidArgument("schedule: cannot parse \"" + std::string(whole) + "\"");
  }
  return v;
}

}  // namespace

ScaleSchedule::ScaleSchedule(std::vector<Resolution> resolutions) : res_(std::move(resolutions)) {
  if (res_.empty()) throw InvalidArgument("schedule: at least one scale is required");
  offsets_.assign(1, 0);
  for (std::size_t k = 0; k < res_.size(); ++k) {
    if (res_[k].h == 0 || res_[k].w == 0) throw InvalidArgument("schedule: zero-sized scale " + std::to_string(k));
    if (k > 0 && (res_[k].h < res_[k - 1].h || res_[k].w < res_[k - 1].w)) {
      throw InvalidArgument("schedule: resolutions must be non-decreasing (scale " + std::to_string(k) + ")");
    }
    offsets_.push_back(offsets_.back() + res_[k].cells());
  }
}

ScaleSchedule ScaleSchedule::from_sides(const std::vector<std::size_t>& sides) {
  std::vector<Resolution> r;
  for (std::size_t s : sides) r.push_back({s, s});
  return ScaleSchedule(std::move(r));
}

ScaleSchedule ScaleSchedule::powers_of_two(std::size_t grid) {
  if (grid == 0 || (grid & (grid - 1)) != 0) throw InvalidArgument("schedule: grid size must be a power of two");
  std::vector<std::size_t> sides;
  for (std::size_t s = 1; s <= grid; s *= 2) sides.push_back(s);
  return from_sides(sides);
}

ScaleSchedule ScaleSchedule::var256() { return from_sides({1, 2, 3, 4, 5, 6, 8, 10, 13, 16}); }

ScaleSchedule ScaleSchedule::toy() { return from_sides({1, 2, 3, 4}); }

ScaleSchedule ScaleSchedule::parse(std::string_view text) {
  if (text == "var256") return var256();
  if (text == "toy") return toy();
  std::vector<Resolution> r;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string_view item = text.substr(start, comma - start);
    const std::size_t x = item.find('x');
    if (x == std::string_view::npos) {
      const std::size_t s = parse_count(item, text);
      r.push_back({s, s});
    } else {
      r.push_back({parse_count(item.substr(0, x), text), parse_count(item.substr(x + 1), text)});
    }
    start = comma + 1;
  }
  return ScaleSchedule(std::move(r));
}

std::vector<std::size_t> ScaleSchedule::block_sizes() const {
  std::vector<std::size_t> b;
  for (const auto& r : res_) b.push_back(r.cells());
  return b;
}

std::size_t ScaleSchedule::scale_of(std::size_t pos) const {
  if (pos >= total_tokens()) throw InvalidArgument("schedule: position out of range");
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), pos);
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

std::string ScaleSchedule::to_string() const {
  std::string s;
  for (std::size_t k = 0; k < res_.size(); ++k) {
    if (k) s += ',';
    s += std::to_string(res_[k].h) + "x" + std::to_string(res_[k].w);
  }
  return s;
}

}  // namespace hmar
