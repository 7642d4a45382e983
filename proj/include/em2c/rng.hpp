#pragma once

#include <cstdint>
#include <random>

namespace em2c {

using Rng = std::mt19937_64;

/// Purpose tags keep substreams drawn for different roles disjoint.
enum class Stream : std::uint64_t {
  kProposal = 1,
  kKernel = 2,
  kResample = 3,
  kLocalMove = 4,
  kProjection = 5,
  kMetric = 6,
  kReference = 7,
  kBaseline = 8,
  kInitial = 9,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based substream: the generator state depends only on the key,
/// never on how many draws other streams have made. Results are therefore
/// independent of thread count and scheduling.
Rng make_stream(std::uint64_t seed, Stream purpose, std::uint64_t a = 0, std::uint64_t b = 0,
                std::uint64_t c = 0);

/// Seed of a child experiment (e.g. a repeat) derived from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace em2c
