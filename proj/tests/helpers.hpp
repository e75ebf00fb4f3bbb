#pragma once

// Shared analytic test fields. Every bump is a compactly supported polynomial,
// exactly zero outside its ball, so supports can be placed clear of box edges
// and truncation layers.

#include <cmath>
#include <cstdint>
#include <vector>

#include "mzh/mzh.hpp"

namespace th {

// phi(x) = (1 - r^2/R^2)^4 inside B(c, R), 0 outside.
inline double bump(const double* x, const double* c, double R, int n = 3) {
    double r2 = 0;
    for (int a = 0; a < n; ++a) r2 += (x[a] - c[a]) * (x[a] - c[a]);
    const double t = 1.0 - r2 / (R * R);
    return t > 0 ? t * t * t * t : 0.0;
}

// grad phi = -8 (x - c) (1 - r^2/R^2)^3 / R^2.
inline void bump_gradient(const double* x, const double* c, double R, double* out, int n = 3) {
    double r2 = 0;
    for (int a = 0; a < n; ++a) r2 += (x[a] - c[a]) * (x[a] - c[a]);
    const double t = 1.0 - r2 / (R * R);
    const double s = t > 0 ? -8.0 * t * t * t / (R * R) : 0.0;
    for (int a = 0; a < n; ++a) out[a] = s * (x[a] - c[a]);
}

inline mzh::ScalarField bump_field(const mzh::DomainPtr& dom, std::vector<double> c, double R) {
    return mzh::build_field(dom, [&](const double* x) { return bump(x, c.data(), R, dom->grid.n); });
}

// u = grad phi: annihilated by the solenoidal projector.
inline mzh::VectorField gradient_bump_field(const mzh::DomainPtr& dom, std::vector<double> c, double R) {
    return mzh::build_vector_field(dom, [&](const double* x, double* out) {
        bump_gradient(x, c.data(), R, out, dom->grid.n);
    });
}

// u = (-(y-c1), x-c0, 0) * phi: divergence-free by symmetry, annihilated by
// the gradient part.
inline mzh::VectorField vortex_bump_field(const mzh::DomainPtr& dom, std::vector<double> c, double R) {
    return mzh::build_vector_field(dom, [&](const double* x, double* out) {
        const double b = bump(x, c.data(), R, dom->grid.n);
        out[0] = -(x[1] - c[1]) * b;
        out[1] = (x[0] - c[0]) * b;
        for (int a = 2; a < dom->grid.n; ++a) out[a] = 0.0;
    });
}

// Periodic band-limited field: random Fourier modes with |k_a| <= kmax.
inline mzh::VectorField band_limited_field(const mzh::DomainPtr& dom, int kmax, std::uint64_t seed) {
    mzh::Rng rng(seed);
    const int n = dom->grid.n;
    struct Mode {
        std::vector<double> k;
        double amp, phase;
    };
    std::vector<std::vector<Mode>> modes(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a)
        for (int m = 0; m < 8; ++m) {
            Mode mo;
            for (int b = 0; b < n; ++b) mo.k.push_back(rng.uniform_int(-kmax, kmax));
            mo.amp = rng.uniform(-1.0, 1.0);
            mo.phase = rng.uniform(0.0, 2.0 * mzh::kPi);
            modes[static_cast<size_t>(a)].push_back(mo);
        }
    const mzh::Grid& g = dom->grid;
    std::vector<double> len(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) len[static_cast<size_t>(a)] = g.extent(a);
    return mzh::build_vector_field(dom, [&](const double* x, double* out) {
        for (int a = 0; a < n; ++a) {
            double s = 0;
            for (const Mode& mo : modes[static_cast<size_t>(a)]) {
                double ph = mo.phase;
                for (int b = 0; b < n; ++b)
                    ph += 2.0 * mzh::kPi * mo.k[static_cast<size_t>(b)] * (x[b] - g.origin[static_cast<size_t>(b)]) / len[static_cast<size_t>(b)];
                s += mo.amp * std::cos(ph);
            }
            out[a] = s;
        }
    });
}

inline double rel_l2(const mzh::VectorField& a, const mzh::VectorField& b) {
    double num = 0, den = 0;
    for (int c = 0; c < a.dims(); ++c)
        for (size_t k = 0; k < a.comp[static_cast<size_t>(c)].size(); ++k) {
            const double d = a.comp[static_cast<size_t>(c)][k] - b.comp[static_cast<size_t>(c)][k];
            num += d * d;
            den += b.comp[static_cast<size_t>(c)][k] * b.comp[static_cast<size_t>(c)][k];
        }
    return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace th
