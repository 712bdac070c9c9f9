#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace pflock {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Independent stream seed from a master seed and a path of stream identifiers.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(master);
  for (std::uint64_t p : path) s = splitmix64(s ^ splitmix64(p + 0x632BE59BD9B4E019ULL));
  return s;
}

// Stream tags used with derive_seed.
namespace stream {
inline constexpr std::uint64_t kSimulation = 1;
inline constexpr std::uint64_t kGa = 2;
inline constexpr std::uint64_t kTraining = 3;
inline constexpr std::uint64_t kInit = 4;
inline constexpr std::uint64_t kPretrain = 5;
inline constexpr std::uint64_t kNoise = 6;
inline constexpr std::uint64_t kEvaluation = 7;
}  // namespace stream

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace pflock
