#pragma once

#include <cmath>

#include "mzh/grid.hpp"
#include "mzh/norms.hpp"
#include "mzh/parallel.hpp"

namespace mzh {

// Radial bump kernel on lattice offsets: profile exp(-1/(1-rho^2)) inside the
// unit ball, dilated to radius eps and renormalized so the discrete mass
// (sum of weights times cell volume) is exactly 1.
struct Mollifier {
    double eps = 0;
    int reach = 0;                   // max offset per axis
    std::vector<double> weights;     // (2*reach+1)^n table, includes cell volume
    int n = 0;

    static double profile(double rho2) {
        return rho2 < 1.0 ? std::exp(-1.0 / (1.0 - rho2)) : 0.0;
    }

    Mollifier(const Grid& g, double eps_) : eps(eps_), n(g.n) {
        if (!(eps > 0)) throw std::invalid_argument("mollifier: eps must be positive");
        const double h = g.h();
        if (eps < h) throw std::invalid_argument("mollifier: eps below grid spacing (kernel under-resolved)");
        reach = static_cast<int>(std::ceil(eps / h)) ;
        const int w = 2 * reach + 1;
        i64 count = 1;
        for (int a = 0; a < n; ++a) count *= w;
        weights.assign(static_cast<size_t>(count), 0.0);
        double mass = 0;
        std::vector<int> off(static_cast<size_t>(n), -reach);
        for (i64 t = 0; t < count; ++t) {
            i64 rem = t;
            double r2 = 0;
            for (int a = n - 1; a >= 0; --a) {
                off[static_cast<size_t>(a)] = static_cast<int>(rem % w) - reach;
                rem /= w;
            }
            for (int a = 0; a < n; ++a) {
                const double da = off[static_cast<size_t>(a)] * h;
                r2 += da * da;
            }
            const double v = profile(r2 / (eps * eps));
            weights[static_cast<size_t>(t)] = v;
            mass += v;
        }
        if (!(mass > 0)) throw std::invalid_argument("mollifier: empty kernel");
        for (double& v : weights) v /= mass;  // discrete unit mass, volume folded in
    }

    double mass() const {
        double s = 0;
        for (double v : weights) s += v;
        return s;
    }
};

// Discrete convolution with the renormalized kernel, input zero-extended.
// Direct stencil sum in a fixed order, so results are bit-reproducible.
inline ScalarField mollify(const ScalarField& f, const Mollifier& m) {
    const DomainSpec& d = *f.dom;
    const Grid& g = d.grid;
    if (m.n != g.n) throw std::invalid_argument("mollify: dimension mismatch");
    const std::vector<double> dense = to_dense(f);
    const auto strides = g.strides();
    const int w = 2 * m.reach + 1;
    ScalarField out(f.dom);
    parallel_for(0, d.size(), [&](i64 k) {
        const i64 flat = d.cells[static_cast<size_t>(k)];
        std::vector<int> idx(static_cast<size_t>(g.n));
        g.unflatten(flat, idx.data());
        double acc = 0;
        std::vector<int> off(static_cast<size_t>(g.n));
        const i64 count = static_cast<i64>(m.weights.size());
        for (i64 t = 0; t < count; ++t) {
            const double wt = m.weights[static_cast<size_t>(t)];
            if (wt == 0.0) continue;
            i64 rem = t;
            bool ok = true;
            i64 src = 0;
            for (int a = g.n - 1; a >= 0; --a) {
                off[static_cast<size_t>(a)] = static_cast<int>(rem % w) - m.reach;
                rem /= w;
            }
            for (int a = 0; a < g.n; ++a) {
                const int j = idx[static_cast<size_t>(a)] - off[static_cast<size_t>(a)];
                if (j < 0 || j >= g.shape[a]) { ok = false; break; }
                src += static_cast<i64>(j) * strides[static_cast<size_t>(a)];
            }
            if (ok) acc += wt * dense[static_cast<size_t>(src)];
        }
        out[k] = acc;
    });
    return out;
}

inline VectorField mollify(const VectorField& u, const Mollifier& m) {
    VectorField out(u.dom);
    for (int a = 0; a < u.dims(); ++a) {
        ScalarField fa(u.dom);
        fa.values = u.comp[static_cast<size_t>(a)];
        out.comp[static_cast<size_t>(a)] = mollify(fa, m).values;
    }
    return out;
}

// Convergence diagnostic for closure membership: the residual
// ||phi_eps * f - f|| in the sampled Morrey norm along an eps ladder.
// Smooth fields decay toward the quadrature floor; the truncated singular
// field plateaus.
struct ZorkoPoint {
    double eps = 0;
    double residual = 0;
};

inline std::vector<ZorkoPoint> zorko_profile(const ScalarField& f, const MorreyParams& p,
                                             const BallSampler& s,
                                             const std::vector<double>& eps_ladder) {
    std::vector<ZorkoPoint> out;
    for (double e : eps_ladder) {
        Mollifier m(f.grid(), e);
        ScalarField g = mollify(f, m);
        for (i64 k = 0; k < g.size(); ++k) g[k] -= f[k];
        out.push_back({e, morrey_norm(g, p, s)});
    }
    return out;
}

}  // namespace mzh
