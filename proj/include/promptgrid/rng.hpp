#pragma once

#include <cstdint>

namespace promptgrid {

/// One step of the splitmix64 sequence (Steele/Lea/Flood). Used to expand
/// seeds into xoshiro state and to derive per-stream seed material.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Stateless splitmix64 finalizer (the mixing function applied to one word).
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// xoshiro256++ (Blackman/Vigna), seeded via splitmix64.
///
/// Substreams: `Xoshiro256pp(seed, stream)` expands `mix64(seed) ^
/// mix64(stream + 1)` through splitmix64, so any (seed, stream) pair names a
/// reproducible generator independent of call order. All randomized
/// components in the toolkit document their stream ids next to their use.
class Xoshiro256pp {
  public:
    explicit Xoshiro256pp(std::uint64_t seed) : Xoshiro256pp(seed, 0) {}

    Xoshiro256pp(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t sm = mix64(seed) ^ mix64(stream + 1);
        for (auto& word : s_) word = splitmix64_next(sm);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in the open interval (0, 1): 53-bit mantissa, offset by half an
    /// ulp so the value is never 0 or 1 and can feed the normal inverse CDF.
    double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

    /// Uniform integer in [0, bound) by rejection (unbiased).
    std::uint64_t uniform_below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    /// Standard normal via the inverse CDF of a single uniform draw. Keeps the
    /// variate count equal to the uniform count, so sequences match across
    /// implementations of the same generator.
    double normal() { return inverse_normal_cdf(uniform()); }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Inverse standard normal CDF (Wichura's AS241, double precision).
    static double inverse_normal_cdf(double p);

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

}  // namespace promptgrid
