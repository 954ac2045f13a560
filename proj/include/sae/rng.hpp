#pragma once

// Deterministic random streams for replicate-parallel Monte Carlo.
//
// A stream is identified by (seed, index) only. Its state is four 64-bit words
// filled by SplitMix64 from a mix of seed and index, and it advances with
// xoshiro256**. Uniforms take the top 53 bits. Normals use the Box-Muller
// transform on two consecutive uniforms, returning the cosine branch first and
// the cached sine branch on the next call. The sequence therefore depends on
// nothing but (seed, index) and the order of calls on the stream.

#include <array>
#include <cstdint>

namespace sae {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Child seed for a sub-experiment: separates bootstrap, simulation and
/// verification streams that share one user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t domain, std::uint64_t index) noexcept;

namespace stream_domain {
inline constexpr std::uint64_t kBootstrap = 0xB007;
inline constexpr std::uint64_t kSimulation = 0x5153;
inline constexpr std::uint64_t kScaling = 0x5CA1;
inline constexpr std::uint64_t kQuadform = 0x40F0;
inline constexpr std::uint64_t kSynthetic = 0x5E7D;
}  // namespace stream_domain

class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t index) noexcept;

    std::uint64_t next_u64() noexcept;

    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    double normal() noexcept;
    double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept;

private:
    std::array<std::uint64_t, 4> s_{};
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace sae
