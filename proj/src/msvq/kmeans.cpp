#include "hmar/msvq/kmeans.hpp"

#include <limits>
#include <numeric>
#include <string>

#include "hmar/error.hpp"
#include "hmar/numerics/interpolate.hpp"
#include "hmar/numerics/rng.hpp"

namespace hmar {
namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const double t = a[c] - b[c];
    s += t * t;
  }
  return s;
}

std::size_t nearest_center(const double* x, const std::vector<double>& centers, std::size_t k, std::size_t d,
                           double* dist) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double s = sq_dist(x, centers.data() + c * d, d);
    if (s < bd) {
      bd = s;
      best = c;
    }
  }
  *dist = bd;
  return best;
}

// Weighted Lloyd iterations from `centers`; returns the final distortion.
template <class Weight>
double lloyd(const double* x, const Weight& weight, std::size_t n, std::size_t dim, std::size_t vocab,
             std::size_t fixed, std::size_t iters, std::vector<double>& centers) {
  std::vector<std::size_t> assign(n, vocab);
  std::vector<double> dist(n);
  std::vector<double> sums(vocab * dim);
  std::vector<double> mass(vocab);
  auto assign_all = [&] {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = nearest_center(x + i * dim, centers, vocab, dim, &dist[i]);
      changed = changed || a != assign[i];
      assign[i] = a;
    }
    return changed;
  };
  for (std::size_t it = 0; it < iters; ++it) {
    if (!assign_all()) break;
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(mass.begin(), mass.end(), 0.0);
    std::vector<std::size_t> members(vocab, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = weight(i);
      mass[assign[i]] += wi;
      ++members[assign[i]];
      for (std::size_t c = 0; c < dim; ++c) sums[assign[i] * dim + c] += wi * x[i * dim + c];
    }
    for (std::size_t k = fixed; k < vocab; ++k) {
      if (members[k] == 0 || mass[k] <= 0.0) {
        std::size_t far = 0;
        for (std::size_t i = 1; i < n; ++i) {
          if (dist[i] > dist[far]) far = i;
        }
        std::copy_n(x + far * dim, dim, centers.begin() + static_cast<std::ptrdiff_t>(k * dim));
        dist[far] = 0.0;
        assign[far] = k;
        continue;
      }
      if (members[k] == 1) {
        // Exact copy of the lone member, avoiding w*x/w rounding.
        for (std::size_t i = 0; i < n; ++i) {
          if (assign[i] == k) {
            std::copy_n(x + i * dim, dim, centers.begin() + static_cast<std::ptrdiff_t>(k * dim));
            break;
          }
        }
        continue;
      }
      for (std::size_t c = 0; c < dim; ++c) centers[k * dim + c] = sums[k * dim + c] / mass[k];
    }
  }
  assign_all();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += weight(i) * dist[i];
  return total;
}

}  // namespace

Codebook fit_codebook(std::span<const double> samples, std::span<const double> weights, std::size_t dim,
                      const KMeansOptions& opts) {
  if (dim == 0 || samples.size() % dim != 0) throw InvalidArgument("fit_codebook: sample buffer is not n x dim");
  const std::size_t n = samples.size() / dim;
  const std::size_t vocab = opts.vocab;
  if (!weights.empty() && weights.size() != n) throw InvalidArgument("fit_codebook: one weight per sample required");
  if (vocab == 0) throw InvalidArgument("fit_codebook: vocabulary must be >= 1");
  const std::size_t needed = opts.pin_zero ? vocab - 1 : vocab;
  if (n < needed) {
    throw InvalidArgument("fit_codebook: " + std::to_string(n) + " samples cannot seed " + std::to_string(vocab) +
                          " codes");
  }
  auto weight = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
  const double* x = samples.data();
  Rng rng(opts.seed);

  std::vector<double> centers(vocab * dim, 0.0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  if (!opts.pin_zero) {
    const std::size_t first = static_cast<std::size_t>(rng.uniform_int(n));
    std::copy_n(x + first * dim, dim, centers.begin());
  }
  for (std::size_t c = 1; c < vocab; ++c) {
    double total = 0.0;
    const double* prev = centers.data() + (c - 1) * dim;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(x + i * dim, prev, dim));
      total += weight(i) * d2[i];
    }
    if (total <= 0.0) throw InvalidArgument("fit_codebook: fewer distinct samples than codes");
    double u = rng.uniform() * total;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = weight(i) * d2[i];
      if (wi <= 0.0) continue;
      pick = i;
      u -= wi;
      if (u < 0.0) break;
    }
    std::copy_n(x + pick * dim, dim, centers.begin() + static_cast<std::ptrdiff_t>(c * dim));
  }

  const std::size_t fixed = opts.pin_zero ? 1 : 0;
  lloyd(x, weight, n, dim, vocab, fixed, opts.iters, centers);

  for (std::size_t shift = 0; shift < opts.shifts && vocab - fixed >= 2; ++shift) {
    std::vector<double> utility(vocab, 0.0), cell(vocab, 0.0);
    std::vector<std::size_t> assign(n), members(vocab, 0);
    for (std::size_t i = 0; i < n; ++i) {
      double d1 = std::numeric_limits<double>::infinity(), d2nd = d1;
      std::size_t a = 0;
      for (std::size_t c = 0; c < vocab; ++c) {
        const double s = sq_dist(x + i * dim, centers.data() + c * dim, dim);
        if (s < d1) {
          d2nd = d1;
          d1 = s;
          a = c;
        } else if (s < d2nd) {
          d2nd = s;
        }
      }
      assign[i] = a;
      ++members[a];
      utility[a] += weight(i) * (d2nd - d1);
      cell[a] += weight(i) * d1;
    }
    const double before = std::accumulate(cell.begin(), cell.end(), 0.0);
    std::size_t low = fixed, high = vocab;
    for (std::size_t k = fixed; k < vocab; ++k) {
      if (utility[k] < utility[low]) low = k;
    }
    for (std::size_t k = 0; k < vocab; ++k) {
      if (k != low && (high == vocab || cell[k] > cell[high])) high = k;
    }
    if (members[high] < 2) break;
    std::size_t far = n;
    double far_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (assign[i] != high) continue;
      const double s = sq_dist(x + i * dim, centers.data() + high * dim, dim);
      if (s > far_d) {
        far_d = s;
        far = i;
      }
    }
    std::vector<double> trial = centers;
    std::copy_n(x + far * dim, dim, trial.begin() + static_cast<std::ptrdiff_t>(low * dim));
    const double after = lloyd(x, weight, n, dim, vocab, fixed, opts.iters, trial);
    if (!(after < before)) break;
    centers = std::move(trial);
  }
  return Codebook(vocab, dim, std::move(centers));
}

ResidualSamples collect_residual_samples(std::span<const LatentGrid> grids, const ScaleSchedule& sched,
                                         const Codebook* cb) {
  ResidualSamples out;
  const Resolution f = sched.finest();
  for (const LatentGrid& x : grids) {
    if (x.height() != f.h || x.width() != f.w) throw InvalidArgument("collect_residual_samples: grid/schedule mismatch");
    LatentGrid residual = x;
    for (std::size_t k = 0; k < sched.scales(); ++k) {
      const Resolution r = sched.resolution(k);
      LatentGrid down = interpolate(residual, r.h, r.w);
      out.values.insert(out.values.end(), down.values().begin(), down.values().end());
      out.weights.insert(out.weights.end(), r.cells(),
                         static_cast<double>(f.cells()) / static_cast<double>(r.cells()));
      if (cb) {
        for (std::size_t i = 0; i < down.cells(); ++i) {
          const auto row = cb->row(cb->nearest(down.cell(i)));
          std::copy(row.begin(), row.end(), down.cell(i).begin());
        }
      }
      residual -= interpolate(down, f.h, f.w);
    }
  }
  return out;
}

Codebook fit_multiscale_codebook(std::span<const LatentGrid> grids, const ScaleSchedule& sched,
                                 const MultiscaleFitOptions& opts) {
  if (grids.empty()) throw InvalidArgument("fit_multiscale_codebook: no grids");
  const std::size_t dim = grids.front().channels();
  Codebook cb;
  for (std::size_t r = 0; r < std::max<std::size_t>(opts.rounds, 1); ++r) {
    const ResidualSamples s = collect_residual_samples(grids, sched, r == 0 ? nullptr : &cb);
    const KMeansOptions km{opts.vocab, opts.iters, splitmix64(opts.seed + r), opts.pin_zero, opts.shifts};
    cb = fit_codebook(s.values, opts.balance_scales ? std::span<const double>(s.weights) : std::span<const double>{},
                      dim, km);
  }
  return cb;
}

}  // namespace hmar
