#include "hmar/training/dataset.hpp"

#include <cmath>
#include <json.hpp>

#include "hmar/common/binary_io.hpp"
#include "hmar/numerics/rng.hpp"

namespace hmar {
namespace {

// Shape masks on a g x g grid, centred then shifted by (di, dj).
double shape_value(std::size_t kind, std::size_t g, long i, long j) {
  const double c = (static_cast<double>(g) - 1.0) / 2.0;
  const double y = static_cast<double>(i) - c, x = static_cast<double>(j) - c;
  const double r = static_cast<double>(g) / 4.0;
  switch (kind % 3) {
    case 0: return (std::abs(y) <= r && std::abs(x) <= r) ? 1.0 : 0.0;                  // square
    case 1: return (std::abs(y) <= r / 2 || std::abs(x) <= r / 2) ? 1.0 : 0.0;          // cross
    default: return std::abs(std::hypot(y, x) - r) <= 0.75 ? 1.0 : 0.0;                  // ring
  }
}

}  // namespace

Dataset generate_toy_corpus(const ToyCorpusOptions& o) {
  if (o.grid < 8 || (o.grid & (o.grid - 1)) != 0) {
    throw InvalidArgument("gen-data: grid size must be a power of two >= 8, got " + std::to_string(o.grid));
  }
  if (o.classes == 0 || o.per_class == 0 || o.dim < 1) throw InvalidArgument("gen-data: empty corpus request");
  Dataset ds;
  ds.num_classes = o.classes;
  const std::size_t g = o.grid;
  const long shift = static_cast<long>(g / 8);
  for (std::size_t c = 0; c < o.classes; ++c) {
    const double level = o.classes == 1 ? 0.0 : -1.5 + 3.0 * static_cast<double>(c) / static_cast<double>(o.classes - 1);
    for (std::size_t s = 0; s < o.per_class; ++s) {
      Rng rng = Rng::substream(o.seed, "data", c * o.per_class + s);
      const long di = static_cast<long>(rng.uniform_int(2 * shift + 1)) - shift;
      const long dj = static_cast<long>(rng.uniform_int(2 * shift + 1)) - shift;
      // Zero-mean texture: horizontal stripes, vertical stripes or a checker
      // with cell size g/8, g/4 or g/2 and a random sign.
      const std::size_t pattern = rng.uniform_int(3);
      const std::size_t cell = (g / 8) << rng.uniform_int(3);
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      LatentGrid x(g, g, o.dim);
      for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = 0; j < g; ++j) {
          const std::size_t bi = i / cell, bj = j / cell;
          const std::size_t parity = pattern == 0 ? bi : pattern == 1 ? bj : bi + bj;
          const double texture = sign * (parity % 2 == 0 ? 0.8 : -0.8);
          const long si = (static_cast<long>(i) - di + static_cast<long>(g)) % static_cast<long>(g);
          const long sj = (static_cast<long>(j) - dj + static_cast<long>(g)) % static_cast<long>(g);
          for (std::size_t ch = 0; ch < o.dim; ++ch) {
            double v = 0.05 * rng.normal();
            if (ch == 0) v += level;
            if (ch == 1 && o.dim > 1) v += shape_value(c, g, si, sj) - 0.5;
            if (ch == o.dim - 1 && o.dim > 2) v += texture;
            x.at(i, j, ch) = static_cast<double>(static_cast<float>(v));
          }
        }
      }
      ds.grids.push_back(std::move(x));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

std::string dataset_to_bytes(const Dataset& ds, std::size_t begin, std::size_t end) {
  if (begin > end || end > ds.size()) throw InvalidArgument("dataset_to_bytes: bad range");
  io::ByteWriter w;
  w.magic("HMDS");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(end - begin));
  const LatentGrid& f = ds.grids.at(begin == end ? 0 : begin);
  w.u32(static_cast<std::uint32_t>(f.height()));
  w.u32(static_cast<std::uint32_t>(f.width()));
  w.u32(static_cast<std::uint32_t>(f.channels()));
  w.u32(static_cast<std::uint32_t>(ds.num_classes));
  for (std::size_t i = begin; i < end; ++i) {
    const LatentGrid& x = ds.grids[i];
    if (x.height() != f.height() || x.width() != f.width() || x.channels() != f.channels()) {
      throw InvalidArgument("dataset_to_bytes: grids differ in shape");
    }
    w.u32(static_cast<std::uint32_t>(ds.labels[i]));
    for (double v : x.values()) w.f32(static_cast<float>(v));
  }
  return w.bytes();
}

Dataset dataset_from_bytes(const std::string& bytes, const std::string& what) {
  io::ByteReader r(bytes, what);
  r.expect_magic("HMDS");
  r.expect_version(kDatasetVersion);
  const std::uint32_t n = r.u32(), h = r.u32(), w = r.u32(), d = r.u32();
  Dataset ds;
  ds.num_classes = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t label = r.u32();
    if (label >= ds.num_classes) throw FormatError(what + ": label " + std::to_string(label) + " out of range");
    LatentGrid x(h, w, d);
    for (double& v : x.values()) v = r.f32();
    ds.grids.push_back(std::move(x));
    ds.labels.push_back(label);
  }
  if (!r.at_end()) throw FormatError(what + ": trailing bytes");
  return ds;
}

std::vector<std::size_t> class_histogram(const Dataset& ds) {
  std::vector<std::size_t> h(ds.num_classes, 0);
  for (std::size_t l : ds.labels) ++h.at(l);
  return h;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds, const ToyCorpusOptions& opts,
                  std::size_t shard_size) {
  if (shard_size == 0) throw InvalidArgument("save_dataset: shard size must be >= 1");
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json m;
  m["format"] = "HMDS";
  m["version"] = kDatasetVersion;
  m["seed"] = opts.seed;
  m["classes"] = ds.num_classes;
  m["samples_per_class"] = opts.per_class;
  m["grid"] = opts.grid;
  m["dim"] = opts.dim;
  m["count"] = ds.size();
  m["class_histogram"] = class_histogram(ds);
  std::vector<std::string> shards;
  for (std::size_t b = 0, s = 0; b < ds.size(); b += shard_size, ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "shard-%03zu.hmds", s);
    io::write_file_atomic(dir / name, dataset_to_bytes(ds, b, std::min(ds.size(), b + shard_size)));
    shards.emplace_back(name);
  }
  m["shards"] = shards;
  io::write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  Dataset ds;
  ds.num_classes = m.at("classes").get<std::size_t>();
  for (const auto& s : m.at("shards")) {
    const auto p = dir / s.get<std::string>();
    Dataset part = dataset_from_bytes(io::read_file(p), p.string());
    if (part.num_classes != ds.num_classes) throw FormatError(p.string() + ": class count disagrees with manifest");
    for (std::size_t i = 0; i < part.size(); ++i) {
      ds.grids.push_back(std::move(part.grids[i]));
      ds.labels.push_back(part.labels[i]);
    }
  }
  if (ds.size() != m.at("count").get<std::size_t>()) throw FormatError(path.string() + ": sample count mismatch");
  return ds;
}

}  // namespace hmar
