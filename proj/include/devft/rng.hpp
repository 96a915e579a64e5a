// SPDX-License-Identifier: Apache-2.0

#ifndef DEVFT_RNG_HPP
#define DEVFT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace devft {

// splitmix64; used for seed expansion and for hashing seed components.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Folds seed components (run seed, stage, round, client id, ...) into one
// stream seed. Every randomized quantity in a run draws from an Rng seeded
// this way, which is what makes runs reproducible under client parallelism.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t acc = 0x243f6a8885a308d3ULL;
    for (std::uint64_t p : parts) {
        std::uint64_t s = acc ^ (p + 0x9e3779b97f4a7c15ULL);
        acc = splitmix64(s);
    }
    return acc;
}

// xoshiro256++ with explicit distribution code. The standard library engines
// are portable but its distributions are not pinned by the standard, so all
// sampling below is spelled out.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform in [0, n) without modulo bias.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            std::uint64_t v = next_u64();
            if (v >= threshold) return v % n;
        }
    }

    // Box-Muller, cosine branch only (stateless draw, two uniforms each).
    double normal() {
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Marsaglia-Tsang gamma(shape, 1), shape > 0.
    double gamma(double shape) {
        if (shape < 1.0) {
            const double u = uniform() > 0.0 ? uniform() : 0x1.0p-53;
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x;
            double v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // Symmetric Dirichlet(concentration) over `dim` components.
    std::vector<double> dirichlet(double concentration, std::size_t dim) {
        std::vector<double> out(dim);
        double sum = 0.0;
        for (auto& w : out) {
            w = gamma(concentration);
            sum += w;
        }
        if (sum <= 0.0) {
            for (auto& w : out) w = 1.0 / static_cast<double>(dim);
            return out;
        }
        for (auto& w : out) w /= sum;
        return out;
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
};

}  // namespace devft

#endif  // DEVFT_RNG_HPP
