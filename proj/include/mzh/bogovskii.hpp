#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "mzh/fd.hpp"
#include "mzh/grid.hpp"
#include "mzh/parallel.hpp"
#include "mzh/potentials.hpp"
#include "mzh/rng.hpp"

namespace mzh {

// Divergence-solver kernel for one star-shaped piece (n = 3):
//   W(x, y) = (x - y) int_1^inf omega(y + r(x - y)) r^{n-1} dr
//           = e * (m0 + 2 m1/d + m2/d^2),  e = (x-y)/d,
// with m_k(x, e) = int omega(x + s e) s^k ds taken along the exact chord of
// the star ball. omega is the polynomial bump C (1 - rho^2/r0^2)^4 with
// closed-form unit mass, so 6-point Gauss-Legendre integrates the chord
// moments exactly (degree <= 10).
struct BogovskiiKernel {
    std::array<double, 3> star_center{};
    double star_radius = 0;
    double mass_c = 0;  // 3465 / (512 pi r0^3)
    std::array<double, 6> gl_x{};
    std::array<double, 6> gl_w{};

    BogovskiiKernel(const std::array<double, 3>& c, double r0) : star_center(c), star_radius(r0) {
        if (!(r0 > 0)) throw std::invalid_argument("bogovskii kernel: nonpositive star radius");
        mass_c = 3465.0 / (512.0 * kPi * r0 * r0 * r0);
        auto [nodes, weights] = CZKernel::gauss_legendre(6);
        for (int i = 0; i < 6; ++i) {
            gl_x[static_cast<size_t>(i)] = 0.5 * (nodes[static_cast<size_t>(i)] + 1.0);
            gl_w[static_cast<size_t>(i)] = 0.5 * weights[static_cast<size_t>(i)];
        }
        const double mass = quadrature_mass();
        if (std::abs(mass - 1.0) > 1e-10)
            throw std::invalid_argument("bogovskii kernel: bump quadrature mass off unity");
    }

    double omega(const double* z) const {
        double rho2 = 0;
        for (int a = 0; a < 3; ++a) {
            const double d = z[a] - star_center[static_cast<size_t>(a)];
            rho2 += d * d;
        }
        rho2 /= star_radius * star_radius;
        if (rho2 >= 1.0) return 0.0;
        const double t = 1.0 - rho2;
        const double t2 = t * t;
        return mass_c * t2 * t2;
    }

    // m[k] = int omega(x + s e) s^k ds, k = 0, 1, 2 over s >= 0.
    void chord_moments(const double* x, const double* e, double* m) const {
        m[0] = m[1] = m[2] = 0;
        double ea = 0, aa = 0;
        for (int a = 0; a < 3; ++a) {
            const double av = x[a] - star_center[static_cast<size_t>(a)];
            ea += e[a] * av;
            aa += av * av;
        }
        const double disc = ea * ea - (aa - star_radius * star_radius);
        if (disc <= 0) return;
        const double sq = std::sqrt(disc);
        const double s2 = -ea + sq;
        if (s2 <= 0) return;
        const double s1 = std::max(-ea - sq, 0.0);
        const double len = s2 - s1;
        for (int g = 0; g < 6; ++g) {
            const double s = s1 + len * gl_x[static_cast<size_t>(g)];
            double z[3];
            for (int a = 0; a < 3; ++a) z[a] = x[a] + s * e[a];
            const double c = gl_w[static_cast<size_t>(g)] * len * omega(z);
            m[0] += c;
            m[1] += c * s;
            m[2] += c * s * s;
        }
    }

    // Mass through the kernel's own rule: 4 pi * m2 from the star center.
    double quadrature_mass() const {
        const double e[3] = {0, 0, 1};
        double m[3];
        chord_moments(star_center.data(), e, m);
        return 4.0 * kPi * m[2];
    }
};

namespace detail {

struct PieceGeometry {
    std::array<double, 3> center{};
    double radius = 0;
    std::array<double, 3> star_center{};
    double star_radius = 0;
};

inline PieceGeometry piece_of_domain(const DomainSpec& d) {
    PieceGeometry p;
    for (int a = 0; a < 3; ++a) {
        p.center[static_cast<size_t>(a)] = d.center[static_cast<size_t>(a)];
        p.star_center[static_cast<size_t>(a)] = d.star_center[static_cast<size_t>(a)];
    }
    p.radius = d.radius;
    p.star_radius = d.star_radius;
    return p;
}

inline PieceGeometry piece_of_star(const StarPiece& s) {
    PieceGeometry p;
    for (int a = 0; a < 3; ++a) {
        p.center[static_cast<size_t>(a)] = s.center[static_cast<size_t>(a)];
        p.star_center[static_cast<size_t>(a)] = s.star_center[static_cast<size_t>(a)];
    }
    p.radius = s.radius;
    p.star_radius = s.star_radius;
    return p;
}

// Seeded segment test: rays from mask-cell centers to star-ball points must
// stay inside the piece ball. Catches star balls poking outside the piece.
inline void star_shape_spot_check(const DomainSpec& d, const PieceGeometry& p) {
    if (!(p.star_radius > 0))
        throw std::invalid_argument("solve_divergence: piece has no star ball");
    double cc = 0;
    for (int a = 0; a < 3; ++a) {
        const double dv = p.star_center[static_cast<size_t>(a)] - p.center[static_cast<size_t>(a)];
        cc += dv * dv;
    }
    if (std::sqrt(cc) + p.star_radius > p.radius * (1.0 + 1e-12))
        throw std::invalid_argument("solve_divergence: star ball not contained in the piece");
    Rng rng(0x5eedULL);
    const i64 step = std::max<i64>(1, d.size() / 32);
    for (i64 k = 0; k < d.size(); k += step) {
        const double* y = d.x(k);
        for (int t = 0; t < 8; ++t) {
            double z[3];
            double zr2;
            do {
                zr2 = 0;
                for (int a = 0; a < 3; ++a) {
                    z[a] = rng.uniform(-1.0, 1.0);
                    zr2 += z[a] * z[a];
                }
            } while (zr2 > 1.0);
            for (int a = 0; a < 3; ++a)
                z[a] = p.star_center[static_cast<size_t>(a)] + p.star_radius * z[a];
            for (int s = 1; s < 16; ++s) {
                const double tt = s / 16.0;
                double r2 = 0;
                for (int a = 0; a < 3; ++a) {
                    const double v = (1 - tt) * y[a] + tt * z[a] - p.center[static_cast<size_t>(a)];
                    r2 += v * v;
                }
                if (r2 > p.radius * p.radius * (1.0 + 1e-9))
                    throw std::invalid_argument("solve_divergence: star-shape spot check failed");
            }
        }
    }
}

// Kernel sum with singularity subtraction on one piece:
//   w(x) = sum_y h^n W(x,y) [f(y) - f(x) - (y-x).grad f(x)]
//        + f(x) * int_Omega W(x,y) dy  -  (int_Omega W(x,y)(y-x)^T dy) grad f(x),
// the two continuum integrals done in exit-distance form over the exact ball
// with a cone-aligned angular rule (the chords vanish outside the cone
// subtended by the star ball).
inline VectorField bogovskii_single(const ScalarField& f, const PieceGeometry& p,
                                    int ntheta = 12, int nphi = 12) {
    const DomainSpec& d = *f.dom;
    const Grid& g = d.grid;
    if (g.n != 3) throw std::invalid_argument("solve_divergence: implemented for n = 3");
    const double vol = g.cell_volume();
    BogovskiiKernel ker(p.star_center, p.star_radius);

    VectorField gradf = gradient(f, 1);

    // affine fast path: the Taylor remainder vanishes identically, so the
    // pair sum contributes nothing and can be skipped
    bool affine = d.size() > 0;
    {
        const double g0[3] = {gradf.comp[0][0], gradf.comp[1][0], gradf.comp[2][0]};
        for (i64 k = 0; k < d.size() && affine; ++k)
            for (int a = 0; a < 3; ++a)
                if (gradf.comp[static_cast<size_t>(a)][static_cast<size_t>(k)] != g0[a]) { affine = false; break; }
        if (affine) {
            const double* x0 = d.x(0);
            for (i64 k = 0; k < d.size(); ++k) {
                const double* y = d.x(k);
                const double rem = f[k] - f[0] -
                    ((y[0] - x0[0]) * g0[0] + (y[1] - x0[1]) * g0[1] + (y[2] - x0[2]) * g0[2]);
                if (rem != 0.0) { affine = false; break; }
            }
        }
    }

    // cone-aligned angular rule scaffolding
    auto [cg, cw] = CZKernel::gauss_legendre(ntheta);

    VectorField w(f.dom);
    parallel_for(0, d.size(), [&](i64 i) {
        const double* x = d.x(i);
        double acc[3] = {0, 0, 0};
        const double gfx[3] = {gradf.comp[0][static_cast<size_t>(i)],
                               gradf.comp[1][static_cast<size_t>(i)],
                               gradf.comp[2][static_cast<size_t>(i)]};

        if (!affine) {
            const double fx = f[i];
            for (i64 j = 0; j < d.size(); ++j) {
                if (j == i) continue;
                const double* y = d.x(j);
                const double dv[3] = {x[0] - y[0], x[1] - y[1], x[2] - y[2]};
                const double d2 = dv[0] * dv[0] + dv[1] * dv[1] + dv[2] * dv[2];
                const double dist = std::sqrt(d2);
                const double e[3] = {dv[0] / dist, dv[1] / dist, dv[2] / dist};
                double m[3];
                ker.chord_moments(x, e, m);
                const double q = m[0] + 2.0 * m[1] / dist + m[2] / d2;
                if (q == 0.0) continue;
                const double rem = f[j] - fx + dv[0] * gfx[0] + dv[1] * gfx[1] + dv[2] * gfx[2];
                const double c = q * rem * vol;
                acc[0] += e[0] * c;
                acc[1] += e[1] * c;
                acc[2] += e[2] * c;
            }
        }

        // cone frame toward the star center
        double av[3];
        double na2 = 0;
        for (int a = 0; a < 3; ++a) {
            av[a] = x[a] - p.star_center[static_cast<size_t>(a)];
            na2 += av[a] * av[a];
        }
        const double na = std::sqrt(na2);
        double axis[3], cmin;
        if (na > p.star_radius) {
            const double rat = p.star_radius / na;
            cmin = std::sqrt(std::max(0.0, 1.0 - rat * rat));
            for (int a = 0; a < 3; ++a) axis[a] = -av[a] / na;
        } else {
            cmin = -1.0;
            axis[0] = 0; axis[1] = 0; axis[2] = 1;
        }
        double t1[3], t2[3];
        {
            const double tmp[3] = {std::abs(axis[0]) < 0.9 ? 1.0 : 0.0,
                                   std::abs(axis[0]) < 0.9 ? 0.0 : 1.0, 0.0};
            t1[0] = axis[1] * tmp[2] - axis[2] * tmp[1];
            t1[1] = axis[2] * tmp[0] - axis[0] * tmp[2];
            t1[2] = axis[0] * tmp[1] - axis[1] * tmp[0];
            const double nt = std::sqrt(t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]);
            for (int a = 0; a < 3; ++a) t1[a] /= nt;
            t2[0] = axis[1] * t1[2] - axis[2] * t1[1];
            t2[1] = axis[2] * t1[0] - axis[0] * t1[2];
            t2[2] = axis[0] * t1[1] - axis[1] * t1[0];
        }

        // ball-exit distance of the ray x - rho e inside the piece ball
        double xc[3];
        double xc2 = 0;
        for (int a = 0; a < 3; ++a) {
            xc[a] = x[a] - p.center[static_cast<size_t>(a)];
            xc2 += xc[a] * xc[a];
        }

        double iA[3] = {0, 0, 0};
        double tB[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
        for (int it = 0; it < ntheta; ++it) {
            const double ct = 0.5 * (cmin + 1.0) + 0.5 * (1.0 - cmin) * cg[static_cast<size_t>(it)];
            const double wt_t = cw[static_cast<size_t>(it)] * 0.5 * (1.0 - cmin);
            const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
            for (int ip = 0; ip < nphi; ++ip) {
                const double ph = 2.0 * kPi * (ip + 0.5) / nphi;
                const double cp = std::cos(ph), sp = std::sin(ph);
                double e[3];
                for (int a = 0; a < 3; ++a) e[a] = ct * axis[a] + st * (cp * t1[a] + sp * t2[a]);
                const double dwt = wt_t * 2.0 * kPi / nphi;
                double m[3];
                ker.chord_moments(x, e, m);
                if (m[0] == 0.0 && m[1] == 0.0 && m[2] == 0.0) continue;
                const double xe = xc[0] * e[0] + xc[1] * e[1] + xc[2] * e[2];
                const double D = xe + std::sqrt(std::max(0.0, xe * xe + p.radius * p.radius - xc2));
                const double A = m[0] * D * D * D / 3.0 + m[1] * D * D + m[2] * D;
                const double B = m[0] * D * D * D * D / 4.0 + (2.0 / 3.0) * m[1] * D * D * D +
                                 0.5 * m[2] * D * D;
                for (int a = 0; a < 3; ++a) {
                    iA[a] += e[a] * A * dwt;
                    for (int b = 0; b < 3; ++b) tB[a][b] += e[a] * e[b] * B * dwt;
                }
            }
        }
        const double fx = f[i];
        for (int a = 0; a < 3; ++a)
            acc[a] += fx * iA[a] - (tB[a][0] * gfx[0] + tB[a][1] * gfx[1] + tB[a][2] * gfx[2]);

        for (int a = 0; a < 3; ++a) w.comp[static_cast<size_t>(a)][static_cast<size_t>(i)] = acc[a];
    });
    return w;
}

inline void require_mean_zero(const ScalarField& f, const char* who) {
    double mean = 0, l1 = 0;
    for (double v : f.values) {
        mean += v;
        l1 += std::abs(v);
    }
    mean *= f.dom->cell_volume();
    l1 *= f.dom->cell_volume();
    if (l1 == 0.0) return;
    if (std::abs(mean) > 1e-8 * l1) {
        std::ostringstream os;
        os << who << ": integral of f is " << mean << " but |f| mass is " << l1
           << " (mean-zero precondition violated)";
        throw std::invalid_argument(os.str());
    }
}

}  // namespace detail

// The paper-style splitting of a mean-zero f over a union of pieces:
//   D_k = union of later pieces, F_k = piece_k cap D_k,
//   g_k = (1 - chi_k) g_{k-1} - chi_k/|F_k| * int_{D_k \ piece_k} g_{k-1},
//   f_k = chi_{piece_k} g_{k-1} - chi_k/|F_k| * int_{piece_k} g_{k-1},
//   f_N = g_{N-1};
// each f_k is supported on its piece, mean-zero, and the f_k telescope back
// to f in quadrature arithmetic.
inline std::vector<ScalarField> split_mean_zero(const ScalarField& f) {
    const DomainSpec& dom = *f.dom;
    if (dom.kind != DomainKind::StarUnion)
        throw std::invalid_argument("split_mean_zero: needs a star-union domain");
    detail::require_mean_zero(f, "split_mean_zero");
    const Grid& g = dom.grid;
    const int N = static_cast<int>(dom.pieces.size());
    const double vol = g.cell_volume();

    // piece masks as dense indicators
    std::vector<DomainPtr> piece_doms;
    for (const auto& p : dom.pieces) {
        DomainSpec b = DomainSpec::ball(g, p.center, p.radius);
        b.star_center = p.star_center;
        b.star_radius = p.star_radius;
        piece_doms.push_back(share(std::move(b)));
    }

    std::vector<ScalarField> out;
    if (N == 1) {
        ScalarField f1(piece_doms[0]);
        const std::vector<double> dense = to_dense(f);
        for (i64 k = 0; k < f1.size(); ++k)
            f1[k] = dense[static_cast<size_t>(piece_doms[0]->cells[static_cast<size_t>(k)])];
        out.push_back(std::move(f1));
        return out;
    }

    const i64 total = g.cell_count();
    std::vector<double> gcur = to_dense(f);

    // union-of-later-pieces masks
    std::vector<std::vector<std::uint8_t>> later(static_cast<size_t>(N));
    {
        std::vector<std::uint8_t> acc(static_cast<size_t>(total), 0);
        for (int k = N - 1; k >= 0; --k) {
            later[static_cast<size_t>(k)] = acc;  // D_k uses pieces after k
            const auto& pm = piece_doms[static_cast<size_t>(k)]->mask;
            for (i64 t = 0; t < total; ++t)
                if (pm[static_cast<size_t>(t)]) acc[static_cast<size_t>(t)] = 1;
        }
    }

    for (int k = 0; k < N - 1; ++k) {
        const auto& pk = piece_doms[static_cast<size_t>(k)]->mask;
        const auto& dk = later[static_cast<size_t>(k)];
        i64 fcount = 0;
        double int_dmo = 0, int_pk = 0;
        for (i64 t = 0; t < total; ++t) {
            const bool in_p = pk[static_cast<size_t>(t)] != 0;
            const bool in_d = dk[static_cast<size_t>(t)] != 0;
            if (in_p && in_d) ++fcount;
            if (in_d && !in_p) int_dmo += gcur[static_cast<size_t>(t)];
            if (in_p) int_pk += gcur[static_cast<size_t>(t)];
        }
        if (fcount == 0) {
            std::ostringstream os;
            os << "split_mean_zero: overlap F_" << (k + 1) << " is empty";
            throw std::invalid_argument(os.str());
        }
        const double fmeas = static_cast<double>(fcount) * vol;
        int_dmo *= vol;
        int_pk *= vol;

        ScalarField fk(piece_doms[static_cast<size_t>(k)]);
        const auto& cells = piece_doms[static_cast<size_t>(k)]->cells;
        for (i64 c = 0; c < fk.size(); ++c) {
            const i64 t = cells[static_cast<size_t>(c)];
            const double chi = dk[static_cast<size_t>(t)] ? 1.0 : 0.0;
            fk[c] = gcur[static_cast<size_t>(t)] - chi / fmeas * int_pk;
        }
        out.push_back(std::move(fk));

        std::vector<double> gnext(static_cast<size_t>(total), 0.0);
        for (i64 t = 0; t < total; ++t) {
            if (!dk[static_cast<size_t>(t)]) continue;  // g_k lives on D_k
            const bool in_f = pk[static_cast<size_t>(t)] && dk[static_cast<size_t>(t)];
            gnext[static_cast<size_t>(t)] =
                in_f ? -int_dmo / fmeas : gcur[static_cast<size_t>(t)];
        }
        gcur = std::move(gnext);
    }

    ScalarField fn(piece_doms[static_cast<size_t>(N - 1)]);
    const auto& cells = piece_doms[static_cast<size_t>(N - 1)]->cells;
    for (i64 c = 0; c < fn.size(); ++c)
        fn[c] = gcur[static_cast<size_t>(cells[static_cast<size_t>(c)])];
    out.push_back(std::move(fn));
    return out;
}

// Solve div w = f with w vanishing at the boundary, f mean-zero, on a ball
// or a union of ball pieces (piecewise solves on the split parts).
inline VectorField solve_divergence(const ScalarField& f) {
    const DomainSpec& dom = *f.dom;
    f.check_finite("solve_divergence");
    detail::require_mean_zero(f, "solve_divergence");

    if (dom.kind == DomainKind::Ball) {
        const auto piece = detail::piece_of_domain(dom);
        detail::star_shape_spot_check(dom, piece);
        return detail::bogovskii_single(f, piece);
    }
    if (dom.kind == DomainKind::StarUnion) {
        std::vector<ScalarField> parts = split_mean_zero(f);
        VectorField w(f.dom);
        for (size_t k = 0; k < parts.size(); ++k) {
            const auto piece = detail::piece_of_star(dom.pieces[k]);
            detail::star_shape_spot_check(*parts[k].dom, piece);
            VectorField wk = detail::bogovskii_single(parts[k], piece);
            const auto& cells = parts[k].dom->cells;
            for (i64 c = 0; c < wk.size(); ++c) {
                const i64 u = dom.compact_of_flat[static_cast<size_t>(cells[static_cast<size_t>(c)])];
                if (u < 0) continue;
                for (int a = 0; a < 3; ++a)
                    w.comp[static_cast<size_t>(a)][static_cast<size_t>(u)] +=
                        wk.comp[static_cast<size_t>(a)][static_cast<size_t>(c)];
            }
        }
        return w;
    }
    throw std::invalid_argument("solve_divergence: domain must be a ball or a star union");
}

}  // namespace mzh
