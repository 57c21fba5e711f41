#pragma once

// Deterministic random number generation.
//
// Every stochastic routine in this library draws through Rng so that a run is
// fully determined by its seed, independent of platform and of how work is
// split across threads. Parallel code forks one stream per unit of work
// (trace, batch sample, propagation row block) via Rng::fork.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

namespace editflow {

namespace detail {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace detail

// xoshiro256++ seeded through splitmix64.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) {
        uint64_t sm = seed;
        for (auto& word : state_) word = detail::splitmix64(sm);
    }

    // Independent stream derived from (seed, stream). Streams with distinct
    // ids are decorrelated regardless of draw counts on either.
    static Rng fork(uint64_t seed, uint64_t stream) {
        uint64_t sm = seed ^ (0x6a09e667f3bcc909ull + stream * 0x9e3779b97f4a7c15ull);
        Rng r(0);
        for (auto& word : r.state_) word = detail::splitmix64(sm);
        return r;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    int64_t uniform_int(int64_t n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        return static_cast<int64_t>(uniform() * static_cast<double>(n));
    }

    // Index drawn from unnormalized nonnegative weights.
    int categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw std::invalid_argument("categorical: zero total weight");
        double u = uniform() * total;
        double acc = 0.0;
        for (size_t i = 0; i + 1 < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size()) - 1;
    }

    double exponential(double rate) {
        if (!(rate > 0.0)) throw std::invalid_argument("exponential: rate must be positive");
        return -std::log1p(-uniform()) / rate;
    }

    // Poisson count by CDF inversion.
    int poisson(double mean) {
        if (mean < 0.0) throw std::invalid_argument("poisson: mean must be nonnegative");
        if (mean == 0.0) return 0;
        const double u = uniform();
        double pmf = std::exp(-mean);
        double cdf = pmf;
        int k = 0;
        while (u >= cdf) {
            ++k;
            pmf *= mean / k;
            cdf += pmf;
            if (k > 1'000'000) throw std::runtime_error("poisson: mean too large for inversion");
        }
        return k;
    }

    double normal() {
        // Box-Muller, one value per call; the sibling draw is discarded.
        double u1 = uniform();
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
};

}  // namespace editflow
