#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hmar {

struct Resolution {
  std::size_t h = 1;
  std::size_t w = 1;
  std::size_t cells() const noexcept { return h * w; }
  friend bool operator==(const Resolution&, const Resolution&) = default;
};

// Coarse-to-fine list of token-map resolutions. Scale indices are 0-based in
// code; scale k covers the sequence range [offset(k), offset(k) + tokens(k)).
class ScaleSchedule {
 public:
  ScaleSchedule() = default;
  explicit ScaleSchedule(std::vector<Resolution> resolutions);

  // Square sides, e.g. {1, 2, 4, 8}.
  static ScaleSchedule from_sides(const std::vector<std::size_t>& sides);
  // Sides 1, 2, 4, ... up to `grid` (a power of two).
  static ScaleSchedule powers_of_two(std::size_t grid);
  // The 10-scale schedule for 16x16 token maps: sides 1,2,3,4,5,6,8,10,13,16.
  static ScaleSchedule var256();
  // Default unit-test schedule: sides 1,2,3,4.
  static ScaleSchedule toy();
  // Accepts a preset name ("var256", "toy"), side lists ("1,2,4,8") or
  // explicit resolutions ("1x1,2x3,4x6").
  static ScaleSchedule parse(std::string_view text);

  std::size_t scales() const noexcept { return res_.size(); }
  const Resolution& resolution(std::size_t k) const { return res_.at(k); }
  const std::vector<Resolution>& resolutions() const noexcept { return res_; }
  std::size_t tokens(std::size_t k) const { return res_.at(k).cells(); }
  std::size_t offset(std::size_t k) const { return offsets_.at(k); }
  std::size_t total_tokens() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
  const Resolution& finest() const { return res_.back(); }
  std::vector<std::size_t> block_sizes() const;
  // Scale index owning sequence position `pos`.
  std::size_t scale_of(std::size_t pos) const;

  std::string to_string() const;

  friend bool operator==(const ScaleSchedule& a, const ScaleSchedule& b) { return a.res_ == b.res_; }

 private:
  std::vector<Resolution> res_;
  std::vector<std::size_t> offsets_;  // K + 1 prefix sums
};

}  // namespace hmar
