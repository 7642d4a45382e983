#include "em2c/rng.hpp"

#include <array>

namespace em2c {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng make_stream(std::uint64_t seed, Stream purpose, std::uint64_t a, std::uint64_t b,
                std::uint64_t c) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b * 0xd1b54a32d192ed03ULL));
  h = splitmix64(h ^ (c * 0x8cb92ba72f3d8dd7ULL));
  const std::uint64_t h2 = splitmix64(h ^ 0x5851f42d4c957f2dULL);
  std::array<std::uint32_t, 4> words{
      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
      static_cast<std::uint32_t>(h2), static_cast<std::uint32_t>(h2 >> 32)};
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x2545f4914f6cdd1dULL));
}

}  // namespace em2c
