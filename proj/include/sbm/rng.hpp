#pragma once

#include <cstdint>
#include <string_view>

namespace sbm {

// Counter-based generator "splitmix64-counter/v1".
//
// Every random draw is a pure function of (seed, stream tag, index...), so a
// value never depends on how many draws happened before it. Stream layout:
//   labels    : derive(seed, kLabelStream, i)       -> uniform for vertex i
//   edges     : derive(seed, kEdgeStream, i, j)     -> uniform for pair (i,j)
//   sub-seeds : derive(seed, kSubSeedStream, k)     -> seed of k-th child
// Changing any of this changes the version string.
inline constexpr std::string_view kRngName = "splitmix64-counter/v1";

inline constexpr std::uint64_t kLabelStream = 0x4c41424cULL;   // "LABL"
inline constexpr std::uint64_t kEdgeStream = 0x45444745ULL;    // "EDGE"
inline constexpr std::uint64_t kSubSeedStream = 0x53554253ULL; // "SUBS"

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t a) {
  return splitmix64(splitmix64(seed) ^ a);
}

constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(derive(seed, a) ^ splitmix64(b));
}

constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                               std::uint64_t c) {
  return splitmix64(derive(seed, a, b) ^ splitmix64(c ^ 0xa5a5a5a5a5a5a5a5ULL));
}

// Uniform in [0,1) with 53 random bits.
constexpr double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t k) {
  return derive(seed, kSubSeedStream, k);
}

// Sequential stream for consumers that need many draws in order
// (restart initializations, random relabelings).
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream) : key_(derive(seed, stream)) {}

  std::uint64_t next_bits() { return splitmix64(key_ ^ splitmix64(counter_++)); }
  double uniform() { return to_unit(next_bits()); }
  // Uniform in (0,1], safe for log.
  double uniform_open0() { return 1.0 - uniform(); }
  // Exponential(1).
  double exponential();
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace sbm
