#pragma once

// Counter-based seeding for reproducible parallel Monte Carlo.
//
// Every replicate derives its own generator from (seed, stream, index), so
// results never depend on how replicates are scheduled across threads.

#include <cstdint>
#include <limits>

namespace bpre {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// xoshiro256** with splitmix64 seeding. Cheap to construct, which matters
/// when millions of short-lived replicates each need their own stream.
class Engine {
 public:
  using result_type = std::uint64_t;

  explicit Engine(std::uint64_t seed = 0x5eed) noexcept { reseed(seed); }

  void reseed(std::uint64_t seed) noexcept {
    for (auto& word : state_) {
      seed += 0x9e3779b97f4a7c15ULL;
      word = splitmix64(seed);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in (0, 1); safe to take logs of.
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  bool operator==(const Engine& other) const noexcept = default;

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4]{};
};

/// Named substreams. Values are part of the reproducibility contract: changing
/// them changes every recorded experiment.
enum class Stream : std::uint64_t {
  environment = 1,
  reproduction = 2,
  walk = 3,
  meander = 4,
  renewal = 5,
  harmonic = 6,
  reference = 7,
  control = 8,
  conditions = 9,
  stable = 10,
  plus_walk = 11,
};

constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream,
                                    std::uint64_t index) noexcept {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (static_cast<std::uint64_t>(stream) * 0xd1b54a32d192ed03ULL));
  h = splitmix64(h ^ index);
  return h;
}

inline Engine make_engine(std::uint64_t seed, Stream stream,
                          std::uint64_t index = 0) noexcept {
  return Engine{derive_seed(seed, stream, index)};
}

}  // namespace bpre
