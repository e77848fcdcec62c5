#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace decmatch {

using Rng = std::mt19937_64;

/// splitmix64 finalizer. Used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for stream `stream` of replication `replication` under `master`.
/// Stream ids are fixed per consumer (see StreamId) so that adding a new
/// consumer never shifts the seeds of the existing ones.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::uint64_t replication,
                                    std::uint64_t stream) noexcept {
  return mix64(mix64(mix64(master) ^ replication) ^ (stream * 0xd1b54a32d192ed03ULL));
}

namespace stream {
inline constexpr std::uint64_t kEnvironment = 0;  // reward draws
inline constexpr std::uint64_t kInit = 1;          // initial actions
inline constexpr std::uint64_t kMarket = 2;        // market generation
inline constexpr std::uint64_t kManBase = 1000;    // + man index
}  // namespace stream

/// Uniform double in [0, 1) from the top 53 bits; identical on every
/// platform, unlike std::uniform_real_distribution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// Index drawn from the probability vector `p` by inverse CDF. The last
/// index absorbs any rounding slack in the cumulative sum.
inline int sample_index(Rng& rng, std::span<const double> p) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

/// Uniform integer in [0, n) via rejection; platform independent.
inline int uniform_int(Rng& rng, int n) {
  const std::uint64_t range = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
  std::uint64_t r = rng();
  while (r >= limit) r = rng();
  return static_cast<int>(r % range);
}

}  // namespace decmatch
