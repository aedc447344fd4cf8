#pragma once

#include <cstdint>
#include <random>

namespace mfcvar {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `index` under purpose tag `tag`, derived from a root seed.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag,
                                    std::uint64_t index = 0) noexcept {
  return mix_seed(mix_seed(mix_seed(root) ^ tag) + index);
}

// Purpose tags for derive_seed.
namespace stream {
inline constexpr std::uint64_t kTraining = 0x7472616eULL;
inline constexpr std::uint64_t kCandidates = 0x63616e64ULL;
inline constexpr std::uint64_t kBenchmark = 0x62656e63ULL;
inline constexpr std::uint64_t kSelection = 0x73656c65ULL;
inline constexpr std::uint64_t kOptimizer = 0x6f707469ULL;
inline constexpr std::uint64_t kBlock = 0x626c6f63ULL;
inline constexpr std::uint64_t kTrial = 0x74726961ULL;
}  // namespace stream

using Rng = std::mt19937_64;

/// Uniform on the open interval (0, 1) with 53 random bits; never returns 0 or 1.
inline double uniform_open(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace mfcvar
