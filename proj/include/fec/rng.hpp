#pragma once

#include <cstdint>
#include <initializer_list>

namespace fec {

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Derives an independent seed from a master seed and a path of stream ids,
// e.g. derive_seed(master, {episode, candidate, member}).
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

// Portable seedable generator: SplitMix64 (64-bit state). All distributions
// are implemented here so that streams are identical across platforms and
// standard-library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix64(state_);
    }

    // Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);

    // Standard normal (128-layer ziggurat, one 64-bit draw on the fast path).
    double normal();

    Rng split(std::uint64_t stream) const;

private:
    std::uint64_t state_;
};

}  // namespace fec
