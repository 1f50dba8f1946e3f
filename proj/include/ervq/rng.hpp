#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>

namespace ervq {

/// Seedable deterministic generator built on splitmix64
/// (state += 0x9E3779B97F4A7C15; two xor-multiply finalizer rounds).
///
/// Every derived draw (doubles, indices, gaussians, discrete samples) is
/// defined purely in terms of the 64-bit stream, so identical seeds yield
/// identical sequences on any platform. None of the libstdc++ distribution
/// classes are used; they are not reproducible across implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) using the top 53 bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform index in [0, n) via 128-bit multiply-shift.
    std::size_t next_index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("Rng::next_index: n must be > 0");
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Standard normal via basic Box-Muller; consumes exactly two draws.
    double next_gaussian() {
        double u1 = 1.0 - next_double();  // (0, 1], keeps log finite
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Sample an index from a vector of nonnegative weights by CDF
    /// inversion over the weight total; consumes one draw.
    std::size_t sample_discrete(std::span<const double> weights) {
        if (weights.empty()) {
            throw std::invalid_argument("Rng::sample_discrete: empty weights");
        }
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) {
                throw std::invalid_argument("Rng::sample_discrete: negative weight");
            }
            total += w;
        }
        if (!(total > 0.0)) {
            throw std::invalid_argument("Rng::sample_discrete: zero weight total");
        }
        double r = next_double() * total;
        double acc = 0.0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            acc += weights[k];
            if (r < acc) return k;
        }
        // r landed on the rounding slack past the last bucket
        for (std::size_t k = weights.size(); k-- > 0;) {
            if (weights[k] > 0.0) return k;
        }
        return weights.size() - 1;
    }

private:
    std::uint64_t state_;
};

}  // namespace ervq
