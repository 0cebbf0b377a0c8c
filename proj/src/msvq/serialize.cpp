#include "hmar/msvq/serialize.hpp"

#include "hmar/common/binary_io.hpp"

namespace hmar {

std::string pyramid_to_bytes(const TokenPyramid& p) {
  io::ByteWriter w;
  w.magic("MSVQ");
  w.u32(kPyramidVersion);
  const ScaleSchedule& s = p.schedule();
  w.u32(static_cast<std::uint32_t>(s.scales()));
  for (std::size_t k = 0; k < s.scales(); ++k) {
    w.u32(static_cast<std::uint32_t>(s.resolution(k).h));
    w.u32(static_cast<std::uint32_t>(s.resolution(k).w));
    for (TokenId t : p.scale(k)) w.u32(t);
  }
  return w.bytes();
}

std::vector<TokenPyramid> pyramids_from_bytes(const std::string& bytes, const std::string& what) {
  io::ByteReader r(bytes, what);
  std::vector<TokenPyramid> out;
  do {
    r.expect_magic("MSVQ");
    r.expect_version(kPyramidVersion);
    const std::uint32_t K = r.u32();
    if (K == 0 || K > 4096) throw FormatError(what + ": implausible scale count " + std::to_string(K));
    std::vector<Resolution> res;
    std::vector<TokenId> tokens;
    for (std::uint32_t k = 0; k < K; ++k) {
      const std::uint32_t h = r.u32(), w = r.u32();
      res.push_back({h, w});
      for (std::uint64_t i = 0; i < std::uint64_t{h} * w; ++i) tokens.push_back(r.u32());
    }
    ScaleSchedule sched;
    try {
      sched = ScaleSchedule(res);
    } catch (const InvalidArgument& e) {
      throw FormatError(what + ": " + e.what());
    }
    TokenPyramid p(sched);
    std::copy(tokens.begin(), tokens.end(), p.tokens().begin());
    out.push_back(std::move(p));
  } while (!r.at_end());
  return out;
}

void save_pyramids(const std::filesystem::path& path, const std::vector<TokenPyramid>& pyramids) {
  std::string bytes;
  for (const auto& p : pyramids) bytes += pyramid_to_bytes(p);
  io::write_file_atomic(path, bytes);
}

std::vector<TokenPyramid> load_pyramids(const std::filesystem::path& path) {
  return pyramids_from_bytes(io::read_file(path), path.string());
}

std::string codebook_to_bytes(const Codebook& cb) {
  io::ByteWriter w;
  w.magic("CDBK");
  w.u32(static_cast<std::uint32_t>(cb.vocab()));
  w.u32(static_cast<std::uint32_t>(cb.dim()));
  for (double v : cb.rows()) w.f32(static_cast<float>(v));
  return w.bytes();
}

Codebook codebook_from_bytes(const std::string& bytes, const std::string& what) {
  io::ByteReader r(bytes, what);
  r.expect_magic("CDBK");
  const std::uint32_t V = r.u32(), D = r.u32();
  std::vector<double> rows(std::size_t{V} * D);
  for (double& v : rows) v = r.f32();
  if (!r.at_end()) throw FormatError(what + ": trailing bytes after codebook rows");
  try {
    return Codebook(V, D, std::move(rows));
  } catch (const InvalidArgument& e) {
    throw FormatError(what + ": " + e.what());
  }
}

void save_codebook(const std::filesystem::path& path, const Codebook& cb) {
  io::write_file_atomic(path, codebook_to_bytes(cb));
}

Codebook load_codebook(const std::filesystem::path& path) { return codebook_from_bytes(io::read_file(path), path.string()); }

Codebook round_to_f32(const Codebook& cb) { return codebook_from_bytes(codebook_to_bytes(cb)); }

}  // namespace hmar
