#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mzh/fd.hpp"
#include "mzh/grid.hpp"
#include "mzh/helmholtz.hpp"
#include "mzh/norms.hpp"
#include "mzh/potentials.hpp"
#include "mzh/rng.hpp"

namespace mzh {

// One sampled inequality: per-sample ratios of the two norms it compares.
// threshold == 0 means record-only; reports are regression-tracked, not
// asserted against analytic constants.
struct InequalityReport {
    std::string id;
    std::vector<std::pair<std::string, double>> params;
    i64 samples = 0;
    double worst_ratio = 0;
    double threshold = 0;
    std::vector<double> ratios;

    void finish() {
        samples = static_cast<i64>(ratios.size());
        worst_ratio = 0;
        for (double r : ratios) worst_ratio = std::max(worst_ratio, r);
    }

    bool passed() const { return threshold <= 0 || worst_ratio <= threshold; }
};

// Seeded sums of 5..20 Gaussian bumps with random centers, widths, and signs.
inline std::vector<ScalarField> bump_family(const DomainPtr& dom, int count, std::uint64_t seed) {
    if (count <= 0) throw std::invalid_argument("bump_family: count must be positive");
    Rng rng(seed);
    const Grid& g = dom->grid;
    std::vector<double> lo(static_cast<size_t>(g.n)), len(static_cast<size_t>(g.n));
    for (int a = 0; a < g.n; ++a) {
        lo[static_cast<size_t>(a)] = g.origin[a];
        len[static_cast<size_t>(a)] = g.extent(a);
    }
    const double scale = *std::min_element(len.begin(), len.end());
    std::vector<ScalarField> out;
    out.reserve(static_cast<size_t>(count));
    for (int s = 0; s < count; ++s) {
        const int nb = static_cast<int>(rng.uniform_int(5, 20));
        std::vector<double> c(static_cast<size_t>(nb * g.n)), w(static_cast<size_t>(nb)), amp(static_cast<size_t>(nb));
        for (int b = 0; b < nb; ++b) {
            for (int a = 0; a < g.n; ++a)
                c[static_cast<size_t>(b * g.n + a)] =
                    lo[static_cast<size_t>(a)] + len[static_cast<size_t>(a)] * rng.uniform(0.15, 0.85);
            w[static_cast<size_t>(b)] = scale * rng.uniform(0.05, 0.18);
            amp[static_cast<size_t>(b)] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 1.5);
        }
        out.push_back(build_field(dom, [&](const double* x) {
            double v = 0;
            for (int b = 0; b < nb; ++b) {
                double r2 = 0;
                for (int a = 0; a < g.n; ++a) {
                    const double d = x[a] - c[static_cast<size_t>(b * g.n + a)];
                    r2 += d * d;
                }
                const double ww = w[static_cast<size_t>(b)];
                v += amp[static_cast<size_t>(b)] * std::exp(-r2 / (2.0 * ww * ww));
            }
            return v;
        }));
    }
    return out;
}

inline std::vector<ScalarField> mean_zero_bump_family(const DomainPtr& dom, int count, std::uint64_t seed) {
    auto fam = bump_family(dom, count, seed);
    const double measure = dom->measure();
    for (auto& f : fam) {
        const double m = integral(f) / measure;
        for (double& v : f.values) v -= m;
    }
    return fam;
}

// Bumps forced to vanish on the two-cell boundary layer: smooth radial taper
// toward the mask edge, then an exact zero on the non-interior cells.
inline std::vector<ScalarField> boundary_zero_bump_family(const DomainPtr& dom, int count, std::uint64_t seed) {
    auto fam = bump_family(dom, count, seed);
    auto interior = interior_mask(*dom, 2);
    const Grid& g = dom->grid;
    std::vector<double> mid(static_cast<size_t>(g.n));
    double rbox = std::numeric_limits<double>::infinity();
    for (int a = 0; a < g.n; ++a) {
        mid[static_cast<size_t>(a)] = g.origin[a] + 0.5 * g.extent(a);
        rbox = std::min(rbox, 0.5 * g.extent(a));
    }
    for (auto& f : fam) {
        for (i64 k = 0; k < f.size(); ++k) {
            if (!interior[static_cast<size_t>(k)]) {
                f[k] = 0;
                continue;
            }
            const double* x = dom->x(k);
            double r2 = 0;
            for (int a = 0; a < g.n; ++a) {
                const double d = x[a] - mid[static_cast<size_t>(a)];
                r2 += d * d;
            }
            const double t = 1.0 - r2 / (rbox * rbox);
            f[k] *= t > 0 ? t * t : 0.0;
        }
    }
    return fam;
}

enum class EmbeddingMode { MorreyToMorrey, LebesgueToMorrey, MorreyToWeighted, WeightedToBlock };

inline const char* embedding_mode_name(EmbeddingMode m) {
    switch (m) {
        case EmbeddingMode::MorreyToMorrey: return "morrey-to-morrey";
        case EmbeddingMode::LebesgueToMorrey: return "lebesgue-to-morrey";
        case EmbeddingMode::MorreyToWeighted: return "morrey-to-weighted";
        case EmbeddingMode::WeightedToBlock: return "weighted-to-block";
    }
    return "?";
}

// Sampled continuity constants of the embedding chain between Morrey, weighted
// Lebesgue, and block spaces on the scaling line (n - l0)/q0 = (n - l1)/q1.
inline InequalityReport check_embedding(const std::vector<ScalarField>& family, const MorreyParams& p0,
                                        const MorreyParams& p1, EmbeddingMode mode,
                                        double kappa = 0) {
    if (family.empty()) throw std::invalid_argument("check_embedding: empty family");
    const int n = p0.n;
    if (kappa == 0) kappa = 0.5 * (p0.lambda + n);
    if (mode == EmbeddingMode::MorreyToMorrey) {
        const double s0 = (n - p0.lambda) / p0.q;
        const double s1 = (n - p1.lambda) / p1.q;
        if (std::abs(s0 - s1) > 1e-12)
            throw std::invalid_argument("check_embedding: scaling relation (n-l0)/q0 = (n-l1)/q1 violated");
        if (!(p0.q <= p1.q && p1.lambda <= p0.lambda))
            throw std::invalid_argument("check_embedding: need q0 <= q1 and l1 <= l0");
    }
    if (mode == EmbeddingMode::MorreyToWeighted || mode == EmbeddingMode::WeightedToBlock) {
        if (!(kappa > p0.lambda && kappa < n))
            throw std::invalid_argument("check_embedding: kappa must lie in (lambda, n)");
    }

    InequalityReport rep;
    rep.id = std::string("embedding-") + embedding_mode_name(mode);
    rep.params = {{"q0", p0.q}, {"lambda0", p0.lambda}, {"q1", p1.q}, {"lambda1", p1.lambda}, {"kappa", kappa}};
    const double alpha = p0.alpha();
    for (const auto& f : family) {
        double target = 0, source = 0;
        switch (mode) {
            case EmbeddingMode::MorreyToMorrey:
                target = morrey_norm(f, p0);
                source = morrey_norm(f, p1);
                break;
            case EmbeddingMode::LebesgueToMorrey:
                target = morrey_norm(f, p0);
                source = lq_norm(f, static_cast<double>(n) / alpha);
                break;
            case EmbeddingMode::MorreyToWeighted:
                target = weighted_lq_norm(f, p0.q, kappa);
                source = morrey_norm(f, p0);
                break;
            case EmbeddingMode::WeightedToBlock:
                target = block_norm_bounds(f, p0.conjugate()).upper;
                source = weighted_lq_norm(f, p0.q_prime(), -kappa / (p0.q - 1.0));
                break;
        }
        if (source == 0) continue;
        rep.ratios.push_back(target / source);
    }
    rep.finish();
    return rep;
}

enum class PoincareMode { ZeroMean, ZeroBoundary };

// Sampled constants of ||f|| <= c ||grad f|| in the Morrey norm over a bounded
// mask, with the gradient by centered differences.
inline InequalityReport check_poincare(const std::vector<ScalarField>& family, const MorreyParams& p,
                                       PoincareMode mode) {
    if (family.empty()) throw std::invalid_argument("check_poincare: empty family");
    const DomainSpec& d = *family.front().dom;
    InequalityReport rep;
    rep.id = mode == PoincareMode::ZeroMean ? "poincare-zero-mean" : "poincare-zero-boundary";
    rep.params = {{"q", p.q}, {"lambda", p.lambda}};
    auto interior = interior_mask(d, 1);
    for (const auto& f : family) {
        if (!f.dom->same_layout(d)) throw std::invalid_argument("check_poincare: family layout mismatch");
        if (mode == PoincareMode::ZeroMean) {
            if (std::abs(integral(f)) > 1e-8)
                throw std::invalid_argument("check_poincare: sample mean exceeds 1e-8; filter the family first");
        } else {
            double fmax = 0, bmax = 0;
            for (i64 k = 0; k < f.size(); ++k) {
                fmax = std::max(fmax, std::abs(f[k]));
                if (!interior[static_cast<size_t>(k)]) bmax = std::max(bmax, std::abs(f[k]));
            }
            if (bmax > 1e-13 * std::max(1.0, fmax))
                throw std::invalid_argument("check_poincare: sample does not vanish on the boundary layer");
        }
        VectorField grad = gradient(f, 2);
        const double den = morrey_norm(grad, p);
        if (den == 0) continue;
        rep.ratios.push_back(morrey_norm(f, p) / den);
    }
    rep.finish();
    return rep;
}

// Deterministic variational test family: the Neumann testset, then seeded
// bumps. Prefixes agree across sizes so enlarging the set is monotone.
inline std::vector<ScalarField> variational_testset(const DomainPtr& dom, int size) {
    auto set = default_neumann_testset(dom);
    if (static_cast<int>(set.size()) > size) set.resize(static_cast<size_t>(size));
    if (static_cast<int>(set.size()) < size) {
        auto extra = bump_family(dom, size - static_cast<int>(set.size()), 0x7e57u);
        for (auto& e : extra) set.push_back(std::move(e));
    }
    return set;
}

// Sampled operator norm of the weakly singular potential I_delta between
// Morrey spaces on the exponent line n/q0 - n/q1 <= delta and
// (n-l0)/q0 - (n-l1)/q1 <= delta.
inline InequalityReport check_fractional(const std::vector<ScalarField>& family, const MorreyParams& p0,
                                         const MorreyParams& p1, double delta) {
    if (family.empty()) throw std::invalid_argument("check_fractional: empty family");
    const int n = p0.n;
    if (n / p0.q - n / p1.q > delta + 1e-12)
        throw std::invalid_argument("check_fractional: n/q0 - n/q1 exceeds delta");
    if ((n - p0.lambda) / p0.q - (n - p1.lambda) / p1.q > delta + 1e-12)
        throw std::invalid_argument("check_fractional: (n-l0)/q0 - (n-l1)/q1 exceeds delta");
    InequalityReport rep;
    rep.id = "fractional";
    rep.params = {{"q0", p0.q}, {"lambda0", p0.lambda}, {"q1", p1.q}, {"lambda1", p1.lambda}, {"delta", delta}};
    for (const auto& f : family) {
        const double source = morrey_norm(f, p0);
        if (source == 0) continue;
        ScalarField g = fractional_integral(f, FractionalParams(delta));
        rep.ratios.push_back(morrey_norm(g, p1) / source);
    }
    rep.finish();
    return rep;
}

// Sampled Morrey operator norm of the zero-mean homogeneous singular kernel
// built from the (0,1) second derivative of the Newtonian potential.
inline InequalityReport check_singular(const std::vector<ScalarField>& family, const MorreyParams& p) {
    if (family.empty()) throw std::invalid_argument("check_singular: empty family");
    InequalityReport rep;
    rep.id = "singular";
    rep.params = {{"q", p.q}, {"lambda", p.lambda}};
    const CZKernel kern = cz_second_gamma(0, 1, p.n);
    const double r_cut = 3.0 * family.front().grid().h();
    for (const auto& f : family) {
        const double source = morrey_norm(f, p);
        if (source == 0) continue;
        ScalarField g = cz_apply(f, kern, r_cut);
        rep.ratios.push_back(morrey_norm(g, p) / source);
    }
    rep.finish();
    return rep;
}

// Empirical constants for || grad p || <= c sup_phi (int grad p . grad phi) /
// || grad phi ||_block. The finite family under-approximates the sup, so the
// recorded ratios are candidate constants only.
inline InequalityReport check_variational(const std::vector<DecompositionResult>& decomps,
                                          const MorreyParams& p, int testset_size) {
    if (decomps.empty()) throw std::invalid_argument("check_variational: no decompositions");
    const DomainPtr dom = decomps.front().p.dom;
    InequalityReport rep;
    rep.id = "variational";
    rep.params = {{"q", p.q}, {"lambda", p.lambda}, {"testset", static_cast<double>(testset_size)}};
    auto testset = variational_testset(dom, testset_size);
    const double vol = dom->cell_volume();
    std::vector<VectorField> grads;
    std::vector<double> gnorms;
    grads.reserve(testset.size());
    for (const auto& phi : testset) {
        VectorField gphi = gradient(phi, 2);
        ScalarField mag(dom);
        for (i64 k = 0; k < dom->size(); ++k) mag[k] = gphi.magnitude(k);
        gnorms.push_back(block_norm_bounds(mag, p.conjugate()).upper);
        grads.push_back(std::move(gphi));
    }
    for (const auto& dec : decomps) {
        if (!dec.p.dom->same_layout(*dom)) throw std::invalid_argument("check_variational: mixed domains");
        const double num = morrey_norm(dec.grad_p, p);
        if (num == 0) continue;
        double sup = 0;
        for (size_t t = 0; t < grads.size(); ++t) {
            if (gnorms[t] == 0) continue;
            double pair = 0;
            for (int a = 0; a < dom->grid.n; ++a)
                for (i64 k = 0; k < dom->size(); ++k)
                    pair += dec.grad_p.comp[static_cast<size_t>(a)][static_cast<size_t>(k)] *
                            grads[t].comp[static_cast<size_t>(a)][static_cast<size_t>(k)];
            sup = std::max(sup, std::abs(pair) * vol / gnorms[t]);
        }
        if (sup == 0) continue;
        rep.ratios.push_back(num / sup);
    }
    rep.finish();
    return rep;
}

}  // namespace mzh
