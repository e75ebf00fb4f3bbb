#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mzh/fd.hpp"
#include "mzh/fft.hpp"
#include "mzh/grid.hpp"
#include "mzh/norms.hpp"
#include "mzh/potentials.hpp"

namespace mzh {

struct DecompDiagnostics {
    double div_w_norm = 0;
    double curl_gradp_norm = 0;
    double weak_residual = 0;
    double boundary_flux_residual = 0;
};

// u = grad_p + w with w always defined as u - grad_p, p gauged mean-zero.
struct DecompositionResult {
    ScalarField p;
    VectorField grad_p;
    VectorField w;
    DecompDiagnostics diagnostics;
};

namespace detail {

inline void gauge_mean_zero(ScalarField& p) {
    double m = 0;
    for (double v : p.values) m += v;
    m /= static_cast<double>(p.size());
    for (double& v : p.values) v -= m;
}

inline VectorField subtract(const VectorField& u, const VectorField& g) {
    VectorField w(u.dom);
    for (int a = 0; a < u.dims(); ++a)
        for (i64 k = 0; k < u.size(); ++k)
            w.comp[static_cast<size_t>(a)][static_cast<size_t>(k)] =
                u.comp[static_cast<size_t>(a)][static_cast<size_t>(k)] - g.comp[static_cast<size_t>(a)][static_cast<size_t>(k)];
    return w;
}

}  // namespace detail

// L2 norm away from stencil-degraded cells; `margin` matches the derivative
// stencil radius of whatever produced `v`.
inline double interior_l2(const VectorField& v, int margin) {
    const auto keep = interior_mask(*v.dom, margin);
    double s = 0;
    for (i64 k = 0; k < v.size(); ++k) {
        if (!keep[static_cast<size_t>(k)]) continue;
        const double m = v.magnitude(k);
        s += m * m;
    }
    return std::sqrt(s * v.dom->cell_volume());
}

// Interior norm of the order-2 difference curl. This is the quantity stored
// in DecompDiagnostics::curl_gradp_norm; a lattice gradient field has a
// resolution floor here, so compare against curl_interior_norm of the input
// rather than against zero.
inline double curl_interior_norm(const VectorField& g) {
    if (g.dims() != 3) return 0.0;
    return interior_l2(curl(g, 2), 2);
}

namespace detail {

inline bool boundary_layer_nonzero(const VectorField& u) {
    const DomainSpec& d = *u.dom;
    const Grid& g = d.grid;
    std::vector<int> idx(static_cast<size_t>(g.n));
    for (i64 k = 0; k < d.size(); ++k) {
        g.unflatten(d.cells[static_cast<size_t>(k)], idx.data());
        bool edge = false;
        for (int a = 0; a < g.n; ++a)
            if (idx[static_cast<size_t>(a)] == 0 || idx[static_cast<size_t>(a)] == g.shape[a] - 1) { edge = true; break; }
        if (edge && u.magnitude(k) != 0.0) return true;
    }
    return false;
}

}  // namespace detail

// Deterministic variational test set: coordinate polynomials and low
// trigonometric modes, 32 members.
inline std::vector<ScalarField> default_neumann_testset(const DomainPtr& dom) {
    std::vector<ScalarField> out;
    const Grid& g = dom->grid;
    auto add = [&](auto&& fn) { out.push_back(build_field(dom, fn)); };
    for (int a = 0; a < g.n; ++a) add([a](const double* x) { return x[a]; });
    for (int a = 0; a < g.n; ++a) add([a](const double* x) { return x[a] * x[a]; });
    for (int a = 0; a < g.n; ++a) {
        const int b = (a + 1) % g.n;
        add([a, b](const double* x) { return x[a] * x[b]; });
    }
    for (int a = 0; a < g.n; ++a) {
        const double lo = g.origin[a], L = g.extent(a);
        for (int mode = 1; mode <= 3; ++mode) {
            add([a, lo, L, mode](const double* x) { return std::sin(kPi * mode * (x[a] - lo) / L); });
            add([a, lo, L, mode](const double* x) { return std::cos(kPi * mode * (x[a] - lo) / L); });
        }
    }
    for (int a = 0; a < g.n; ++a) {
        const int b = (a + 1) % g.n;
        const double loa = g.origin[a], La = g.extent(a);
        const double lob = g.origin[b], Lb = g.extent(b);
        add([=](const double* x) {
            return std::sin(kPi * (x[a] - loa) / La) * std::sin(kPi * (x[b] - lob) / Lb);
        });
    }
    {
        std::vector<double> c(static_cast<size_t>(g.n));
        double w2 = 0;
        for (int a = 0; a < g.n; ++a) {
            c[static_cast<size_t>(a)] = g.origin[a] + 0.5 * g.extent(a);
            w2 += g.extent(a) * g.extent(a);
        }
        w2 /= 16.0;
        add([c, w2, n = g.n](const double* x) {
            double r2 = 0;
            for (int a = 0; a < n; ++a) r2 += (x[a] - c[static_cast<size_t>(a)]) * (x[a] - c[static_cast<size_t>(a)]);
            return std::exp(-r2 / w2);
        });
        add([c, n = g.n](const double* x) {
            double r2 = 0;
            for (int a = 0; a < n; ++a) r2 += (x[a] - c[static_cast<size_t>(a)]) * (x[a] - c[static_cast<size_t>(a)]);
            return r2;
        });
    }
    return out;
}

// Face-difference weak residual: max over test functions of
//   |<(Gp - u_face), G phi>| / ||G phi||,
// with G the interior-face difference gradient and u averaged to faces.
// This is the quadrature the bounded solver is adjoint-consistent with.
inline double weak_neumann_residual(const ScalarField& p, const VectorField& u,
                                    const std::vector<ScalarField>& testset) {
    if (testset.empty()) throw std::invalid_argument("weak_neumann_residual: empty test set");
    const DomainSpec& d = *p.dom;
    if (!u.dom->same_layout(d)) throw std::invalid_argument("weak_neumann_residual: layout mismatch");
    const Grid& g = d.grid;
    const double h = g.h();
    const double vol = g.cell_volume();
    const auto strides = g.strides();
    double worst = 0;
    for (const auto& phi : testset) {
        if (!phi.dom->same_layout(d)) throw std::invalid_argument("weak_neumann_residual: test layout mismatch");
        double num = 0, den = 0;
        for (int a = 0; a < g.n; ++a) {
            for (i64 k = 0; k < d.size(); ++k) {
                const i64 m = detail::mask_neighbor(d, strides, d.cells[static_cast<size_t>(k)], a, +1);
                if (m < 0) continue;
                const double gp = (p[m] - p[k]) / h;
                const double gphi = (phi[m] - phi[k]) / h;
                const double uf = 0.5 * (u.comp[static_cast<size_t>(a)][static_cast<size_t>(k)] +
                                         u.comp[static_cast<size_t>(a)][static_cast<size_t>(m)]);
                num += (gp - uf) * gphi;
                den += gphi * gphi;
            }
        }
        if (den <= 0) continue;
        worst = std::max(worst, std::abs(num * vol) / std::sqrt(den * vol));
    }
    return worst;
}

namespace detail {

inline DecompDiagnostics standard_diagnostics(const VectorField& u, const ScalarField& p,
                                              const VectorField& grad_p, const VectorField& w) {
    DecompDiagnostics dg;
    dg.div_w_norm = l2_norm(divergence(w, 2));
    dg.curl_gradp_norm = curl_interior_norm(grad_p);
    auto testset = default_neumann_testset(u.dom);
    testset.push_back(p);
    dg.weak_residual = weak_neumann_residual(p, u, testset);
    dg.boundary_flux_residual = 0.0;
    return dg;
}

}  // namespace detail

// Per-mode projection onto divergence-free fields on the periodic box;
// p recovered from the complementary part, mean-zero by construction.
inline DecompositionResult decompose_fullspace_spectral(const VectorField& u) {
    if (u.dom->kind != DomainKind::Box)
        throw std::invalid_argument("decompose_fullspace_spectral: needs a periodic box field");
    u.check_finite("decompose_fullspace_spectral");
    const Grid& g = u.grid();
    SpectralVectorField uhat = spectral_forward(u);
    SpectralVectorField what = riesz_projection_symbol(uhat);

    // p_hat = -i (xi . u_hat) / |xi|^2
    const int n = g.n;
    std::vector<std::complex<double>> phat(uhat.comp[0].size(), {0, 0});
    std::vector<std::complex<double>> divw(uhat.comp[0].size(), {0, 0});
    std::vector<int> kk(static_cast<size_t>(n));
    std::vector<double> xi(static_cast<size_t>(n));
    const std::complex<double> I(0, 1);
    for (i64 m = 0; m < static_cast<i64>(phat.size()); ++m) {
        Spectral::frequency(uhat.shape, m, kk.data());
        double x2 = 0;
        for (int a = 0; a < n; ++a) {
            xi[static_cast<size_t>(a)] = 2.0 * kPi * kk[static_cast<size_t>(a)] / uhat.lengths[static_cast<size_t>(a)];
            x2 += xi[static_cast<size_t>(a)] * xi[static_cast<size_t>(a)];
        }
        std::complex<double> dotu(0, 0), dotw(0, 0);
        for (int a = 0; a < n; ++a) {
            dotu += xi[static_cast<size_t>(a)] * uhat.comp[static_cast<size_t>(a)][static_cast<size_t>(m)];
            dotw += xi[static_cast<size_t>(a)] * what.comp[static_cast<size_t>(a)][static_cast<size_t>(m)];
        }
        phat[static_cast<size_t>(m)] = x2 == 0.0 ? std::complex<double>(0, 0) : -I * dotu / x2;
        divw[static_cast<size_t>(m)] = I * dotw;
    }

    DecompositionResult res;
    res.w = spectral_inverse(what, u.dom);
    res.p = from_dense(u.dom, Spectral::inverse(uhat.shape, phat));
    detail::gauge_mean_zero(res.p);
    res.grad_p = detail::subtract(u, res.w);
    res.w = detail::subtract(u, res.grad_p);

    ScalarField dw = from_dense(u.dom, Spectral::inverse(uhat.shape, divw));
    res.diagnostics = detail::standard_diagnostics(u, res.p, res.grad_p, res.w);
    res.diagnostics.div_w_norm = l2_norm(dw);  // spectral divergence, exact for this route
    return res;
}

namespace detail {

// Gamma convolution table entry on a geometric lattice offset (in units of h):
// analytic equal-volume-ball value at 0, subcell-averaged near field, midpoint
// beyond. `self_value` already carries the 1/cell_volume factor.
class GammaTable {
  public:
    GammaTable(const Grid& g, double r_cut_cells)
        : n_(g.n), h_(g.h()), near2_(r_cut_cells * r_cut_cells + 1e-9) {
        const double req = equal_volume_radius(g);
        self_ = req * req / (2.0 * (2 - n_)) / g.cell_volume();
        grid_ = &g;
    }

    double operator()(const double* off_cells) const {
        double o2 = 0;
        for (int a = 0; a < n_; ++a) o2 += off_cells[a] * off_cells[a];
        if (o2 == 0.0) return self_;
        if (o2 <= near2_) {
            std::vector<int> io(static_cast<size_t>(n_));
            for (int a = 0; a < n_; ++a) io[static_cast<size_t>(a)] = static_cast<int>(std::lround(off_cells[a]));
            return subcell_average(*grid_, io.data(), 4,
                                   [this](const double* y) { return gamma_eval(y, n_); });
        }
        std::vector<double> y(static_cast<size_t>(n_));
        for (int a = 0; a < n_; ++a) y[static_cast<size_t>(a)] = off_cells[a] * h_;
        return gamma_eval(y.data(), n_);
    }

  private:
    int n_;
    double h_;
    double near2_;
    double self_;
    const Grid* grid_;
};

}  // namespace detail

// Direct singular-integral route on compactly supported fields:
//   grad_p_i = sum_j p.v. conv(d_i d_j Gamma, u_j) + u_i / n,
//   p        = Gamma * (div u).
inline DecompositionResult decompose_fullspace_direct(const VectorField& u) {
    if (u.dom->kind != DomainKind::Box)
        throw std::invalid_argument("decompose_fullspace_direct: needs a box field");
    if (detail::boundary_layer_nonzero(u))
        throw std::invalid_argument("decompose_fullspace_direct: support touches the box boundary");
    u.check_finite("decompose_fullspace_direct");
    const Grid& g = u.grid();
    const int n = g.n;
    const double rcut = 3.0 * g.h();

    DecompositionResult res;
    res.grad_p = VectorField(u.dom);
    for (int i = 0; i < n; ++i) {
        ScalarField acc(u.dom);
        for (int j = 0; j < n; ++j) {
            ScalarField uj(u.dom);
            uj.values = u.comp[static_cast<size_t>(j)];
            ScalarField t = cz_apply(uj, cz_second_gamma(i, j, n), rcut);
            for (i64 k = 0; k < acc.size(); ++k) acc[k] += t[k];
        }
        for (i64 k = 0; k < acc.size(); ++k)
            acc[k] += u.comp[static_cast<size_t>(i)][static_cast<size_t>(k)] / n;
        res.grad_p.comp[static_cast<size_t>(i)] = std::move(acc.values);
    }

    ScalarField divu = divergence(u, 2);
    ScalarField ip = fractional_integral(divu, FractionalParams(2.0));
    const double cgamma = 1.0 / ((2.0 - n) * sphere_area(n));
    for (i64 k = 0; k < ip.size(); ++k) ip[k] *= cgamma;
    res.p = std::move(ip);
    detail::gauge_mean_zero(res.p);

    res.w = detail::subtract(u, res.grad_p);
    res.diagnostics = detail::standard_diagnostics(u, res.p, res.grad_p, res.w);
    return res;
}

// Half-space slab: even-reflection Neumann kernel,
//   p(x) = int (Gamma(x - y) + Gamma(x - y_bar)) (div u)(y) dy,
// y_bar the mirror of y across the slab bottom plane. The image sum is a
// z-flipped convolution with the kernel shifted by one slab height.
inline DecompositionResult decompose_halfspace(const VectorField& u) {
    if (u.dom->kind != DomainKind::HalfSpace)
        throw std::invalid_argument("decompose_halfspace: needs a half-space slab field");
    u.check_finite("decompose_halfspace");
    const Grid& g = u.grid();
    const int n = g.n;
    const int zax = n - 1;
    const int nz = g.shape[zax];

    {
        // support must stay clear of the truncation top
        const auto strides = g.strides();
        std::vector<int> idx(static_cast<size_t>(n));
        for (i64 k = 0; k < u.size(); ++k) {
            g.unflatten(u.dom->cells[static_cast<size_t>(k)], idx.data());
            if (idx[static_cast<size_t>(zax)] == nz - 1 && u.magnitude(k) != 0.0)
                throw std::invalid_argument("decompose_halfspace: support touches the truncation top");
        }
    }

    ScalarField divu = divergence(u, 2);
    const std::vector<double> dense = to_dense(divu);
    detail::GammaTable table(g, 3.0);

    std::vector<int> maxoff(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) maxoff[static_cast<size_t>(a)] = g.shape[a] - 1;
    PaddedConv conv(g.shape, maxoff);

    conv.load_signal(dense);
    std::vector<double> p_dir = conv.apply([&](const int* off) {
        std::vector<double> oc(static_cast<size_t>(n));
        for (int a = 0; a < n; ++a) oc[static_cast<size_t>(a)] = off[a];
        return table(oc.data());
    });

    conv.load_signal(flip_axis(g.shape, dense, zax));
    std::vector<double> p_img = conv.apply([&](const int* off) {
        std::vector<double> oc(static_cast<size_t>(n));
        for (int a = 0; a < n; ++a) oc[static_cast<size_t>(a)] = off[a];
        oc[static_cast<size_t>(zax)] += nz;  // image offset i_z + j_z + 1 after the flip
        return table(oc.data());
    });

    const double vol = g.cell_volume();
    DecompositionResult res;
    res.p = ScalarField(u.dom);
    for (i64 k = 0; k < res.p.size(); ++k) {
        const i64 f = u.dom->cells[static_cast<size_t>(k)];
        res.p[k] = (p_dir[static_cast<size_t>(f)] + p_img[static_cast<size_t>(f)]) * vol;
    }
    detail::gauge_mean_zero(res.p);

    res.grad_p = gradient(res.p, 4);
    res.w = detail::subtract(u, res.grad_p);
    res.diagnostics = detail::standard_diagnostics(u, res.p, res.grad_p, res.w);

    // flux mismatch |dp/dz - u_z| sampled on the bottom cell layer
    {
        const auto strides = g.strides();
        ScalarField dpz = derivative(res.p, zax, 2);
        std::vector<int> idx(static_cast<size_t>(n));
        double worst = 0;
        for (i64 k = 0; k < res.p.size(); ++k) {
            g.unflatten(u.dom->cells[static_cast<size_t>(k)], idx.data());
            if (idx[static_cast<size_t>(zax)] != 0) continue;
            worst = std::max(worst, std::abs(dpz[k] - u.comp[static_cast<size_t>(zax)][static_cast<size_t>(k)]));
        }
        res.diagnostics.boundary_flux_residual = worst;
    }
    return res;
}

namespace detail {

// Linear interpolation along the z axis of a column-resolved dense array,
// with exact-node snapping so an identity flattening map is bit-exact.
struct ColumnInterp {
    const Grid* g;
    const DomainSpec* d;
    int zax;

    double at(const std::vector<double>& dense_vals, const std::vector<int>& col_idx, double z) const {
        const double t = (z - g->origin[zax]) / g->spacing[zax] - 0.5;
        double fl = std::floor(t);
        double frac = t - fl;
        if (frac > 1.0 - 1e-9) { fl += 1.0; frac = 0.0; }
        if (frac < 1e-9) frac = 0.0;
        const int k0 = static_cast<int>(fl);
        auto fetch = [&](int kz) -> double {
            if (kz < 0 || kz >= g->shape[zax]) return 0.0;
            std::vector<int> idx = col_idx;
            idx[static_cast<size_t>(zax)] = kz;
            const i64 f = g->flatten(idx.data());
            if (!d->in_mask(f)) return 0.0;
            return dense_vals[static_cast<size_t>(f)];
        };
        if (frac == 0.0) return fetch(k0);
        return (1.0 - frac) * fetch(k0) + frac * fetch(k0 + 1);
    }
};

}  // namespace detail

// Bent half-space via the measure-preserving flattening (x', xn) ->
// (x', xn - sigma(x')): resample u onto a flat slab, decompose there, pull
// the potential back, and form gradients in the original coordinates.
inline DecompositionResult decompose_bent_halfspace(const VectorField& u, double slope_threshold = 0.2) {
    const DomainSpec& d = *u.dom;
    if (d.kind != DomainKind::Graph)
        throw std::invalid_argument("decompose_bent_halfspace: needs a graph-domain field");
    u.check_finite("decompose_bent_halfspace");
    const Grid& g = d.grid;
    const int n = g.n;
    const int zax = n - 1;

    // measured max slope of the sampled boundary graph
    {
        std::vector<i64> cstr(static_cast<size_t>(n - 1), 1);
        for (int a = n - 3; a >= 0; --a) cstr[static_cast<size_t>(a)] = cstr[static_cast<size_t>(a + 1)] * g.shape[a + 1];
        double slope = 0;
        std::vector<int> ci(static_cast<size_t>(n - 1));
        const i64 cols = static_cast<i64>(d.sigma.size());
        for (i64 c = 0; c < cols; ++c) {
            i64 rem = c;
            for (int a = n - 2; a >= 0; --a) {
                ci[static_cast<size_t>(a)] = static_cast<int>(rem % g.shape[a]);
                rem /= g.shape[a];
            }
            for (int a = 0; a < n - 1; ++a) {
                if (ci[static_cast<size_t>(a)] + 1 >= g.shape[a]) continue;
                const double ds = d.sigma[static_cast<size_t>(c + cstr[static_cast<size_t>(a)])] - d.sigma[static_cast<size_t>(c)];
                slope = std::max(slope, std::abs(ds) / g.spacing[a]);
            }
        }
        if (slope > slope_threshold) {
            std::ostringstream os;
            os << "decompose_bent_halfspace: boundary slope " << slope << " exceeds threshold " << slope_threshold;
            throw std::invalid_argument(os.str());
        }
    }

    // flat slab over the same lateral box
    std::vector<double> org = g.origin;
    org[static_cast<size_t>(zax)] = 0.0;
    Grid flat_grid(g.shape, org, g.spacing);
    DomainPtr slab = share(DomainSpec::half_space(flat_grid));

    auto column_sigma = [&](const std::vector<int>& idx) {
        i64 c = 0;
        for (int a = 0; a < n - 1; ++a) c = c * g.shape[a] + idx[static_cast<size_t>(a)];
        return d.sigma[static_cast<size_t>(c)];
    };

    detail::ColumnInterp src{&g, &d, zax};
    VectorField v(slab);
    {
        std::vector<std::vector<double>> dense(static_cast<size_t>(n));
        for (int a = 0; a < n; ++a) {
            ScalarField fa(u.dom);
            fa.values = u.comp[static_cast<size_t>(a)];
            dense[static_cast<size_t>(a)] = to_dense(fa);
        }
        std::vector<int> idx(static_cast<size_t>(n));
        for (i64 k = 0; k < slab->size(); ++k) {
            flat_grid.unflatten(slab->cells[static_cast<size_t>(k)], idx.data());
            const double s = column_sigma(idx);
            const double zsrc = flat_grid.origin[zax] + (idx[static_cast<size_t>(zax)] + 0.5) * flat_grid.spacing[zax] + s;
            for (int a = 0; a < n; ++a)
                v.comp[static_cast<size_t>(a)][static_cast<size_t>(k)] = src.at(dense[static_cast<size_t>(a)], idx, zsrc);
        }
    }

    DecompositionResult flat = decompose_halfspace(v);

    detail::ColumnInterp back{&flat_grid, slab.get(), zax};
    const std::vector<double> pdense = to_dense(flat.p);
    DecompositionResult res;
    res.p = ScalarField(u.dom);
    {
        std::vector<int> idx(static_cast<size_t>(n));
        for (i64 k = 0; k < d.size(); ++k) {
            g.unflatten(d.cells[static_cast<size_t>(k)], idx.data());
            const double s = column_sigma(idx);
            const double zflat = g.origin[zax] + (idx[static_cast<size_t>(zax)] + 0.5) * g.spacing[zax] - s;
            res.p[k] = back.at(pdense, idx, zflat);
        }
    }
    // p inherits the flat-slab gauge; re-gauging here would shift an identity
    // flattening off its bit-exact reduction to the half-space route
    res.grad_p = gradient(res.p, 4);
    res.w = detail::subtract(u, res.grad_p);
    res.diagnostics = detail::standard_diagnostics(u, res.p, res.grad_p, res.w);
    res.diagnostics.boundary_flux_residual = flat.diagnostics.boundary_flux_residual;
    return res;
}

namespace detail {

// Graph-Laplacian weak Neumann system on the mask: A = G^T G over interior
// faces, symmetric positive semidefinite, kernel = constants on a connected
// mask. apply() and rhs() share the same face set, so CG convergence implies
// a small face-form weak residual.
struct NeumannSystem {
    const DomainSpec& d;
    std::vector<i64> strides;
    double h;

    explicit NeumannSystem(const DomainSpec& dom)
        : d(dom), strides(dom.grid.strides()), h(dom.grid.h()) {}

    void apply(const std::vector<double>& p, std::vector<double>& out) const {
        std::fill(out.begin(), out.end(), 0.0);
        const double c = std::pow(h, d.grid.n - 2);
        for (int a = 0; a < d.grid.n; ++a)
            for (i64 k = 0; k < d.size(); ++k) {
                const i64 m = mask_neighbor(d, strides, d.cells[static_cast<size_t>(k)], a, +1);
                if (m < 0) continue;
                const double e = (p[static_cast<size_t>(k)] - p[static_cast<size_t>(m)]) * c;
                out[static_cast<size_t>(k)] += e;
                out[static_cast<size_t>(m)] -= e;
            }
    }

    std::vector<double> rhs(const VectorField& u) const {
        std::vector<double> b(static_cast<size_t>(d.size()), 0.0);
        const double c = std::pow(h, d.grid.n - 1);
        for (int a = 0; a < d.grid.n; ++a)
            for (i64 k = 0; k < d.size(); ++k) {
                const i64 m = mask_neighbor(d, strides, d.cells[static_cast<size_t>(k)], a, +1);
                if (m < 0) continue;
                const double uf = 0.5 * (u.comp[static_cast<size_t>(a)][static_cast<size_t>(k)] +
                                         u.comp[static_cast<size_t>(a)][static_cast<size_t>(m)]) * c;
                b[static_cast<size_t>(k)] -= uf;
                b[static_cast<size_t>(m)] += uf;
            }
        return b;
    }
};

inline void project_mean_zero(std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double& x : v) x -= m;
}

inline bool mask_connected(const DomainSpec& d) {
    const auto strides = d.grid.strides();
    std::vector<std::uint8_t> seen(static_cast<size_t>(d.size()), 0);
    std::vector<i64> queue{0};
    seen[0] = 1;
    size_t head = 0;
    while (head < queue.size()) {
        const i64 k = queue[head++];
        for (int a = 0; a < d.grid.n; ++a)
            for (int s = -1; s <= 1; s += 2) {
                const i64 m = mask_neighbor(d, strides, d.cells[static_cast<size_t>(k)], a, s);
                if (m >= 0 && !seen[static_cast<size_t>(m)]) {
                    seen[static_cast<size_t>(m)] = 1;
                    queue.push_back(m);
                }
            }
    }
    return static_cast<i64>(queue.size()) == d.size();
}

}  // namespace detail

// Discrete weak Neumann problem on a bounded mask, conjugate gradient on the
// singular (mean-zero) system, p gauged mean-zero.
inline DecompositionResult decompose_bounded_neumann(const VectorField& u, double cg_tol = 1e-10,
                                                     int max_iters = 20000) {
    const DomainSpec& d = *u.dom;
    if (d.kind == DomainKind::HalfSpace || d.kind == DomainKind::Graph)
        throw std::invalid_argument("decompose_bounded_neumann: needs a bounded mask");
    u.check_finite("decompose_bounded_neumann");
    if (!detail::mask_connected(d))
        throw std::invalid_argument("decompose_bounded_neumann: mask is disconnected");

    detail::NeumannSystem sys(d);
    std::vector<double> b = sys.rhs(u);
    detail::project_mean_zero(b);
    const size_t m = b.size();
    std::vector<double> x(m, 0.0), r = b, z(m, 0.0), q(m, 0.0);
    double bnorm = 0;
    for (double v : b) bnorm += v * v;
    bnorm = std::sqrt(bnorm);
    std::vector<double> history;
    if (bnorm > 0) {
        std::vector<double> pdir = r;
        double rr = bnorm * bnorm;
        int it = 0;
        for (; it < max_iters; ++it) {
            sys.apply(pdir, q);
            double pq = 0;
            for (size_t i = 0; i < m; ++i) pq += pdir[i] * q[i];
            if (pq <= 0) break;  // singular direction, should not occur off constants
            const double alpha = rr / pq;
            for (size_t i = 0; i < m; ++i) {
                x[i] += alpha * pdir[i];
                r[i] -= alpha * q[i];
            }
            detail::project_mean_zero(r);
            double rr2 = 0;
            for (size_t i = 0; i < m; ++i) rr2 += r[i] * r[i];
            history.push_back(std::sqrt(rr2) / bnorm);
            if (history.back() <= cg_tol) break;
            const double beta = rr2 / rr;
            rr = rr2;
            for (size_t i = 0; i < m; ++i) pdir[i] = r[i] + beta * pdir[i];
        }
        if (history.empty() || history.back() > cg_tol) {
            std::ostringstream os;
            os << "decompose_bounded_neumann: CG stalled after " << history.size()
               << " iterations, relative residuals";
            const size_t tail = std::min<size_t>(history.size(), 5);
            for (size_t i = history.size() - tail; i < history.size(); ++i) os << ' ' << history[i];
            throw std::runtime_error(os.str());
        }
    }

    DecompositionResult res;
    res.p = ScalarField(u.dom);
    res.p.values = std::move(x);
    detail::gauge_mean_zero(res.p);
    res.grad_p = gradient(res.p, 2);
    res.w = detail::subtract(u, res.grad_p);
    res.diagnostics = detail::standard_diagnostics(u, res.p, res.grad_p, res.w);
    return res;
}

}  // namespace mzh
