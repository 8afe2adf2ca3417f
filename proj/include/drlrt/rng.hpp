#pragma once

#include <cstdint>
#include <random>

namespace drlrt {

// splitmix64 finalizer; bijective 64-bit mix.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Substream generator keyed by (seed, stream). Monte Carlo draw j always uses
// stream j, so results are independent of evaluation order and thread count.
class StreamRng {
public:
  StreamRng(std::uint64_t seed, std::uint64_t stream) {
    const std::uint64_t a = mix64(seed);
    const std::uint64_t b = mix64(mix64(seed ^ 0x5851f42d4c957f2dULL) + stream);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    engine_.seed(seq);
  }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t next_u64() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace drlrt
