#include "fec/rng.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace fec {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix64(seed + kGolden);
    for (std::uint64_t id : path) {
        h = mix64(h ^ mix64(id + kGolden));
    }
    return h;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    // Reject the low residue band so every value is equally likely.
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold) return r % n;
    }
}

namespace {

// Layer edges x[0..128] and densities f(x) for the 128-layer ziggurat of
// exp(-x^2/2). x[0] is the base layer's pseudo-width V / f(r); x[128] = 0.
struct Ziggurat {
    static constexpr double kR = 3.442619855899;
    static constexpr double kV = 9.91256303526217e-3;
    double x[129];
    double f[129];

    Ziggurat() {
        const auto density = [](double v) { return std::exp(-0.5 * v * v); };
        x[0] = kV / density(kR);
        x[1] = kR;
        for (int i = 1; i < 127; ++i) x[i + 1] = std::sqrt(-2.0 * std::log(kV / x[i] + density(x[i])));
        x[128] = 0.0;
        for (int i = 0; i < 129; ++i) f[i] = density(x[i]);
    }
};

const Ziggurat& ziggurat() {
    static const Ziggurat z;
    return z;
}

}  // namespace

double Rng::normal() {
    const Ziggurat& z = ziggurat();
    for (;;) {
        const std::uint64_t bits = next_u64();
        const int layer = static_cast<int>(bits & 127);
        const std::uint64_t sign = (bits & 128) << 56;  // bit 7 moved to the sign bit
        const double x = static_cast<double>(bits >> 11) * 0x1.0p-53 * z.x[layer];
        if (x < z.x[layer + 1]) return std::bit_cast<double>(std::bit_cast<std::uint64_t>(x) ^ sign);
        if (layer == 0) {
            // Tail beyond r, by Marsaglia's exponential rejection.
            double a = 0.0;
            double b = 0.0;
            do {
                a = -std::log(1.0 - uniform()) / Ziggurat::kR;
                b = -std::log(1.0 - uniform());
            } while (b + b < a * a);
            return std::bit_cast<double>(std::bit_cast<std::uint64_t>(Ziggurat::kR + a) ^ sign);
        }
        const double y = z.f[layer] + uniform() * (z.f[layer + 1] - z.f[layer]);
        if (y < std::exp(-0.5 * x * x)) return std::bit_cast<double>(std::bit_cast<std::uint64_t>(x) ^ sign);
    }
}

Rng Rng::split(std::uint64_t stream) const {
    return Rng(derive_seed(state_, {stream}));
}

}  // namespace fec
