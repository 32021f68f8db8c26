#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>

namespace qpt {

/// 64-bit finalizer used for both stream generation and key derivation
/// (SplitMix64 mixing function). Chosen over std::<random> engines because
/// every distribution here must be bit-stable across platforms and worker
/// counts; the standard library only guarantees engine stability, not
/// distribution stability.
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Deterministic key derivation: folds the parts into a single 64-bit key.
/// The scheme (xor-then-finalize per part, with a fixed increment) is part of
/// the reproducibility contract: results derived from
/// (seed, purpose tag, item indices...) never depend on evaluation order or
/// worker count.
inline constexpr std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts) noexcept {
    std::uint64_t key = 0x9E3779B97F4A7C15ULL;
    for (std::uint64_t p : parts) {
        key = mix64((key + 0x9E3779B97F4A7C15ULL) ^ p);
    }
    return key;
}

/// Purpose tags keeping independent streams disjoint per subcommand.
enum : std::uint64_t {
    TAG_SIMULATE = 0x51,
    TAG_KMER = 0x52,
    TAG_POPREC = 0x53,
    TAG_RECONSTRUCT = 0x54,
    TAG_VERIFY = 0x55,
    TAG_BENCH = 0x56,
};

///// Counter-based pseudo-random stream (SplitMix64). Instances are cheap:
/// one per (trace, position) work item is the intended usage pattern.
class Stream {
  public:
    explicit constexpr Stream(std::uint64_t key) noexcept : state_(key) {}

    /// Next raw 64-bit word.
    constexpr std::uint64_t next_u64() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix64(state_);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Single uniform bit.
    int next_bit() noexcept { return static_cast<int>(next_u64() >> 63); }

    /// Bernoulli(p) draw; p must lie in [0, 1].
    bool bernoulli(double p) noexcept { return next_double() < p; }

    /// Geometric draw counting failures before the first success:
    /// P[X = j] = (1-p)^j * p for j = 0, 1, 2, ...
    /// Implemented as repeated Bernoulli trials so the sampled law is exact
    /// and the stream consumption order is self-evident. Requires p > 0.
    std::uint64_t geometric(double p) {
        if (!(p > 0.0) || p > 1.0) {
            throw std::invalid_argument("geometric: success probability must be in (0, 1]");
        }
        std::uint64_t j = 0;
        while (!bernoulli(p)) ++j;
        return j;
    }

  private:
    std::uint64_t state_;
};

} // namespace qpt
