#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hmar/msvq/schedule.hpp"

namespace hmar {

// Per-scale edit flags, scale-concatenated like a token pyramid.
using EditRegion = std::vector<std::uint8_t>;

// Flags every token whose cell centre lies inside the normalized box
// [y0, y1) x [x0, x1); `invert` flags the outside instead (outpainting).
EditRegion region_from_box(const ScaleSchedule& sched, double y0, double x0, double y1, double x1,
                           bool invert = false);

// One line per scale, "scale <k> <h>x<w>: <runs>", with run lengths
// alternating between unflagged and flagged cells in row-major order,
// starting with unflagged. '#' starts a comment.
std::string region_to_rle(const ScaleSchedule& sched, const EditRegion& region);
// Throws FormatError on malformed lines, missing scales or shape mismatch.
EditRegion region_from_rle(std::string_view text, const ScaleSchedule& sched);

void save_region(const std::filesystem::path& path, const ScaleSchedule& sched, const EditRegion& region);
EditRegion load_region(const std::filesystem::path& path, const ScaleSchedule& sched);

}  // namespace hmar
