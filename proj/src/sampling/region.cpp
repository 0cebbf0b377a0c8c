#include "hmar/sampling/region.hpp"

#include <sstream>

#include "hmar/common/binary_io.hpp"
#include "hmar/common/kv.hpp"
#include "hmar/error.hpp"

namespace hmar {

EditRegion region_from_box(const ScaleSchedule& sched, double y0, double x0, double y1, double x1, bool invert) {
  EditRegion r(sched.total_tokens(), 0);
  for (std::size_t k = 0; k < sched.scales(); ++k) {
    const Resolution res = sched.resolution(k);
    for (std::size_t i = 0; i < res.h; ++i) {
      for (std::size_t j = 0; j < res.w; ++j) {
        const double cy = (static_cast<double>(i) + 0.5) / static_cast<double>(res.h);
        const double cx = (static_cast<double>(j) + 0.5) / static_cast<double>(res.w);
        const bool inside = cy >= y0 && cy < y1 && cx >= x0 && cx < x1;
        r[sched.offset(k) + i * res.w + j] = inside != invert ? 1 : 0;
      }
    }
  }
  return r;
}

std::string region_to_rle(const ScaleSchedule& sched, const EditRegion& region) {
  if (region.size() != sched.total_tokens()) throw InvalidArgument("region_to_rle: flag count mismatch");
  std::ostringstream os;
  for (std::size_t k = 0; k < sched.scales(); ++k) {
    const Resolution res = sched.resolution(k);
    os << "scale " << k << ' ' << res.h << 'x' << res.w << ':';
    std::uint8_t cur = 0;
    std::size_t run = 0;
    for (std::size_t i = 0; i < res.cells(); ++i) {
      const std::uint8_t f = region[sched.offset(k) + i] ? 1 : 0;
      if (f != cur) {
        os << ' ' << run;
        cur = f;
        run = 0;
      }
      ++run;
    }
    os << ' ' << run << '\n';
  }
  return os.str();
}

EditRegion region_from_rle(std::string_view text, const ScaleSchedule& sched) {
  EditRegion r(sched.total_tokens(), 0);
  std::vector<bool> seen(sched.scales(), false);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const std::string where = "region line " + std::to_string(lineno);
    std::istringstream ls(line);
    std::string word, shape;
    std::size_t k = 0;
    if (!(ls >> word >> k >> shape) || word != "scale" || shape.empty() || shape.back() != ':') {
      throw FormatError(where + ": expected \"scale <k> <h>x<w>: <runs>\"");
    }
    if (k >= sched.scales() || seen[k]) throw FormatError(where + ": scale " + std::to_string(k) + " invalid or repeated");
    const Resolution res = sched.resolution(k);
    const std::string want = std::to_string(res.h) + "x" + std::to_string(res.w) + ":";
    if (shape != want) throw FormatError(where + ": shape " + shape + " does not match schedule " + want);
    seen[k] = true;
    std::size_t pos = 0, run = 0;
    std::uint8_t cur = 0;
    while (ls >> run) {
      if (pos + run > res.cells()) throw FormatError(where + ": runs exceed " + std::to_string(res.cells()) + " cells");
      for (std::size_t i = 0; i < run; ++i) r[sched.offset(k) + pos + i] = cur;
      pos += run;
      cur ^= 1;
    }
    if (!ls.eof()) throw FormatError(where + ": non-numeric run length");
    if (pos != res.cells()) throw FormatError(where + ": runs cover " + std::to_string(pos) + " of " +
                                              std::to_string(res.cells()) + " cells");
  }
  for (std::size_t k = 0; k < sched.scales(); ++k) {
    if (!seen[k]) throw FormatError("region: scale " + std::to_string(k) + " missing");
  }
  return r;
}

void save_region(const std::filesystem::path& path, const ScaleSchedule& sched, const EditRegion& region) {
  io::write_file_atomic(path, region_to_rle(sched, region));
}

EditRegion load_region(const std::filesystem::path& path, const ScaleSchedule& sched) {
  return region_from_rle(io::read_file(path), sched);
}

}  // namespace hmar
