#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hmar/msvq/codebook.hpp"
#include "hmar/msvq/pyramid.hpp"

namespace hmar {

inline constexpr std::uint32_t kPyramidVersion = 1;

// "MSVQ", u32 version, u32 K, then per scale u32 H, u32 W, H*W u32 tokens.
// Files hold one or more consecutive records.
std::string pyramid_to_bytes(const TokenPyramid& p);
std::vector<TokenPyramid> pyramids_from_bytes(const std::string& bytes, const std::string& what = "pyramid");
void save_pyramids(const std::filesystem::path& path, const std::vector<TokenPyramid>& pyramids);
std::vector<TokenPyramid> load_pyramids(const std::filesystem::path& path);

// "CDBK", u32 V, u32 D, V*D f32 rows.
std::string codebook_to_bytes(const Codebook& cb);
Codebook codebook_from_bytes(const std::string& bytes, const std::string& what = "codebook");
void save_codebook(const std::filesystem::path& path, const Codebook& cb);
Codebook load_codebook(const std::filesystem::path& path);

// Rounds rows through f32 so in-memory and reloaded codebooks agree exactly.
Codebook round_to_f32(const Codebook& cb);

}  // namespace hmar
