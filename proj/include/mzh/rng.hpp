#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mzh {

// Deterministic draws: mt19937_64 with explicit transforms, so sequences are
// identical across platforms and standard-library implementations.
struct Rng {
    std::mt19937_64 eng;
    bool has_spare = false;
    double spare = 0.0;

    explicit Rng(std::uint64_t seed) : eng(seed) {}

    double uniform() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        const int v = lo + static_cast<int>(uniform() * (hi - lo + 1));
        return v > hi ? hi : v;
    }

    double normal() {
        if (has_spare) { has_spare = false; return spare; }
        double u1;
        do { u1 = uniform(); } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 6.283185307179586476925286766559 * u2;
        spare = r * std::sin(th);
        has_spare = true;
        return r * std::cos(th);
    }
};

}  // namespace mzh
