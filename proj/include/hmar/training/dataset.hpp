#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hmar/numerics/grid.hpp"

namespace hmar {

struct Dataset {
  std::vector<LatentGrid> grids;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return grids.size(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct ToyCorpusOptions {
  std::size_t classes = 2;
  std::size_t per_class = 64;
  std::size_t grid = 8;  // power of two >= 8
  std::size_t dim = 3;
  std::uint64_t seed = 0;
};

// Procedural class-conditional latent grids. Each class has its own global
// intensity (channel 0) and shape (channel 1, placed with a random shift);
// every sample carries random fine stripes (last channel) and small noise.
// Samples are ordered class-major and stored at f32 precision, so a shard
// round trip is exact.
Dataset generate_toy_corpus(const ToyCorpusOptions& opts);

// Shard layout: "HMDS", u32 version, u32 count, u32 h, u32 w, u32 d,
// u32 classes, then per sample a u32 label and h*w*d f32 values.
inline constexpr std::uint32_t kDatasetVersion = 1;
std::string dataset_to_bytes(const Dataset& ds, std::size_t begin, std::size_t end);
Dataset dataset_from_bytes(const std::string& bytes, const std::string& what = "dataset shard");

// Writes shard-NNN.hmds files plus manifest.json into `dir`.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds, const ToyCorpusOptions& opts,
                  std::size_t shard_size = 256);
// Loads every shard listed in dir/manifest.json in order.
Dataset load_dataset(const std::filesystem::path& dir);

std::vector<std::size_t> class_histogram(const Dataset& ds);

}  // namespace hmar
