#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hmar/model/config.hpp"
#include "hmar/model/params.hpp"

namespace hmar {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::uint32_t phase = 1;  // last completed training phase (0 = untrained)
  std::uint64_t step = 0;
  std::string run_config;   // full run configuration, for provenance
};

// "HMAR", u32 version, length-prefixed config blob, u32 tensor count, then
// per tensor: name, u32 dtype (0 = f32), u32 rank, u32 dims, f32 payload.
std::string checkpoint_to_bytes(const Checkpoint& ck);
Checkpoint checkpoint_from_bytes(const std::string& bytes, const std::string& what = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hmar
