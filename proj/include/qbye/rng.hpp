// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace qbye {

// Deterministic splittable generator (splitmix64 core). Every random draw in
// the project flows through this so runs are reproducible bit-for-bit from a
// single seed, independent of platform or standard library.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : seed_(seed), state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

    // uniform integer in [lo, hi], inclusive
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % range);
    }

    double normal() {
        // Box-Muller, one value per call
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Derive an independent child stream. Children depend only on the seed
    // this generator was constructed with and the stream id, not on how much
    // the parent has been consumed, so stream layouts stay stable.
    Rng child(uint64_t stream) const {
        return Rng(mix(mix(seed_, 0x5851f42d4c957f2dull), stream));
    }
    Rng child(uint64_t a, uint64_t b) const { return child(mix(a, b)); }
    Rng child(std::string_view tag, uint64_t a = 0, uint64_t b = 0) const {
        uint64_t h = 0xcbf29ce484222325ull;
        for (char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        return child(mix(mix(h, a), b));
    }

    uint64_t seed() const { return seed_; }

    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    uint64_t seed_;
    uint64_t state_;
};

} // namespace qbye
