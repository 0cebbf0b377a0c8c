#include "hmar/msvq/multiscale.hpp"

#include <string>

#include "hmar/error.hpp"
#include "hmar/numerics/interpolate.hpp"

namespace hmar {
namespace {

void check_pyramid(const TokenPyramid& tokens, const Codebook& cb, const ScaleSchedule& sched) {
  if (!(tokens.schedule() == sched)) throw InvalidArgument("decode: pyramid schedule does not match");
  tokens.validate(cb.vocab());
}

}  // namespace

LatentGrid upsampled_lookup(std::span<const TokenId> tokens, std::size_t k, const Codebook& cb,
                            const ScaleSchedule& sched) {
  const Resolution r = sched.resolution(k);
  if (tokens.size() != r.cells()) throw InvalidArgument("lookup: token count does not match scale resolution");
  LatentGrid coarse(r.h, r.w, cb.dim());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= cb.vocab()) throw InvalidArgument("lookup: token outside vocabulary");
    const auto row = cb.row(tokens[i]);
    std::copy(row.begin(), row.end(), coarse.cell(i).begin());
  }
  const Resolution f = sched.finest();
  return interpolate(coarse, f.h, f.w);
}

EncodeResult encode(const LatentGrid& x, const Codebook& cb, const ScaleSchedule& sched) {
  const Resolution f = sched.finest();
  if (x.height() != f.h || x.width() != f.w || x.channels() != cb.dim()) {
    throw InvalidArgument("encode: latent grid " + std::to_string(x.height()) + "x" + std::to_string(x.width()) + "x" +
                          std::to_string(x.channels()) + " does not match schedule " + std::to_string(f.h) + "x" +
                          std::to_string(f.w) + " and codebook width " + std::to_string(cb.dim()));
  }
  if (cb.empty()) throw InvalidArgument("encode: empty codebook");
  EncodeResult res;
  res.tokens = TokenPyramid(sched);
  res.running.reserve(sched.scales());
  res.residual_energy.push_back(x.energy());

  LatentGrid residual = x;
  LatentGrid recon(f.h, f.w, x.channels());
  for (std::size_t k = 0; k < sched.scales(); ++k) {
    const Resolution r = sched.resolution(k);
    const LatentGrid down = interpolate(residual, r.h, r.w);
    auto toks = res.tokens.scale(k);
    for (std::size_t i = 0; i < r.cells(); ++i) toks[i] = cb.nearest(down.cell(i));
    const LatentGrid up = upsampled_lookup(toks, k, cb, sched);
    residual -= up;
    recon += up;
    res.running.push_back(recon);
    res.residual_energy.push_back(residual.energy());
  }
  return res;
}

LatentGrid decode_prefix(const TokenPyramid& tokens, const Codebook& cb, const ScaleSchedule& sched, std::size_t upto) {
  check_pyramid(tokens, cb, sched);
  if (upto > sched.scales()) throw InvalidArgument("decode: prefix longer than schedule");
  const Resolution f = sched.finest();
  LatentGrid recon(f.h, f.w, cb.dim());
  for (std::size_t k = 0; k < upto; ++k) {
    for (auto m : tokens.mask(k)) {
      if (m) throw InvalidState("decode: scale " + std::to_string(k) + " still holds [MASK] tokens");
    }
    recon += upsampled_lookup(tokens.scale(k), k, cb, sched);
  }
  return recon;
}

LatentGrid decode(const TokenPyramid& tokens, const Codebook& cb, const ScaleSchedule& sched) {
  return decode_prefix(tokens, cb, sched, sched.scales());
}

}  // namespace hmar
