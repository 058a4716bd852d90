#pragma once

#include <cstdint>
#include <random>

namespace imsat {

// Seeded random source. Every stochastic component draws from one of these;
// sub-streams are forked deterministically so runs reproduce bit-for-bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    double gaussian(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    // Integer in [0, n)
    std::uint64_t index(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
    }

    std::uint64_t raw() { return engine_(); }

    // Deterministic child seed; advances this stream.
    std::uint64_t fork_seed() {
        // splitmix64 step decorrelates consecutive children
        std::uint64_t z = engine_() + 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace imsat
