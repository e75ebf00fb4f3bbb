#pragma once

#include <cmath>
#include <complex>
#include <functional>

#include "mzh/fft.hpp"
#include "mzh/grid.hpp"

namespace mzh {

inline constexpr double kPi = 3.14159265358979323846;

// Surface area of the unit sphere in R^n: sigma_n = 2 pi^{n/2} / Gamma(n/2).
inline double sphere_area(int n) {
    if (n < 2) throw std::invalid_argument("sphere_area: need n >= 2");
    return 2.0 * std::pow(kPi, 0.5 * n) / std::tgamma(0.5 * n);
}

inline double ball_volume(int n) { return sphere_area(n) / n; }

// Fundamental solution of the Laplacian, Gamma(x) = |x|^{2-n} / ((2-n) sigma_n).
inline double gamma_eval(const double* x, int n) {
    if (n < 3) throw std::invalid_argument("gamma_eval: need n >= 3");
    double r2 = 0;
    for (int a = 0; a < n; ++a) r2 += x[a] * x[a];
    if (r2 == 0.0) throw std::invalid_argument("gamma_eval: singular at x = 0");
    return std::pow(r2, 0.5 * (2 - n)) / ((2 - n) * sphere_area(n));
}

inline double gamma_eval(const std::vector<double>& x) {
    return gamma_eval(x.data(), static_cast<int>(x.size()));
}

// Gradient of Gamma: x / (sigma_n |x|^n).
inline void gamma_gradient(const double* x, int n, double* out) {
    double r2 = 0;
    for (int a = 0; a < n; ++a) r2 += x[a] * x[a];
    if (r2 == 0.0) throw std::invalid_argument("gamma_gradient: singular at x = 0");
    const double c = 1.0 / (sphere_area(n) * std::pow(r2, 0.5 * n));
    for (int a = 0; a < n; ++a) out[a] = c * x[a];
}

struct FractionalParams {
    double delta = 2.0;
    FractionalParams() = default;
    explicit FractionalParams(double d) : delta(d) {}
};

// Radius of the ball with the volume of one grid cell.
inline double equal_volume_radius(const Grid& g) {
    return g.h() * std::pow(ball_volume(g.n), -1.0 / g.n);
}

// Riesz-type potential (I_delta f)(x) = sum_y h^n f(y) |x-y|^{delta-n} over the
// mask, midpoint rule with the self cell replaced by the analytic integral of
// |y|^{delta-n} over the equal-volume ball. delta = n degenerates to the
// constant kernel, so the output is exactly the integral of f everywhere.
inline ScalarField fractional_integral(const ScalarField& f, const FractionalParams& fp) {
    const DomainSpec& d = *f.dom;
    const Grid& g = d.grid;
    const int n = g.n;
    if (!(fp.delta > 0.0) || !(fp.delta <= n))
        throw std::invalid_argument("fractional_integral: need 0 < delta <= n");
    if (d.kind == DomainKind::HalfSpace || d.kind == DomainKind::Graph)
        throw std::invalid_argument("fractional_integral: domain kind is unbounded");
    f.check_finite("fractional_integral");
    const double h = g.h();
    const double req = equal_volume_radius(g);
    const double self = sphere_area(n) * std::pow(req, fp.delta) / fp.delta / g.cell_volume();
    std::vector<int> maxoff(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) maxoff[static_cast<size_t>(a)] = g.shape[a] - 1;
    PaddedConv conv(g.shape, maxoff);
    conv.load_signal(to_dense(f));
    std::vector<double> dense = conv.apply([&](const int* off) {
        double r2 = 0;
        for (int a = 0; a < n; ++a) {
            const double da = off[a] * h;
            r2 += da * da;
        }
        if (r2 == 0.0) return self;
        return std::pow(r2, 0.5 * (fp.delta - n));
    });
    for (double& v : dense) v *= g.cell_volume();
    return from_dense(f.dom, dense);
}

// Zero-degree-homogeneous symbol with vanishing sphere mean; the full kernel
// is S(y) = nu(y/|y|) / |y|^n.
struct CZKernel {
    std::function<double(const double*)> nu;  // unit direction -> symbol value
    double bound = 0;
    int n = 3;
    double sphere_mean = 0;

    CZKernel(std::function<double(const double*)> symbol, double c_bound, int dim)
        : nu(std::move(symbol)), bound(c_bound), n(dim) {
        if (n != 3) throw std::invalid_argument("cz kernel: sphere check implemented for n = 3");
        // product Gauss-Legendre x uniform rule on the sphere
        const int nt = 24, np = 48;
        auto [tn, tw] = gauss_legendre(nt);
        double mean = 0, wsum = 0, mx = 0;
        for (int i = 0; i < nt; ++i) {
            const double ct = tn[static_cast<size_t>(i)];
            const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
            for (int j = 0; j < np; ++j) {
                const double ph = 2.0 * kPi * (j + 0.5) / np;
                const double dir[3] = {st * std::cos(ph), st * std::sin(ph), ct};
                const double v = nu(dir);
                const double w = tw[static_cast<size_t>(i)];
                mean += w * v;
                wsum += w;
                mx = std::max(mx, std::abs(v));
            }
        }
        sphere_mean = mean / wsum;
        if (std::abs(sphere_mean) > 1e-6)
            throw std::invalid_argument("cz kernel: sphere mean of symbol exceeds 1e-6");
        if (mx > bound * (1.0 + 1e-12))
            throw std::invalid_argument("cz kernel: symbol exceeds stated bound");
    }

    double full(const double* y) const {
        double r2 = 0;
        for (int a = 0; a < n; ++a) r2 += y[a] * y[a];
        const double r = std::sqrt(r2);
        if (r == 0.0) throw std::invalid_argument("cz kernel: singular at 0");
        double dir[3];
        for (int a = 0; a < n; ++a) dir[a] = y[a] / r;
        return nu(dir) / std::pow(r, n);
    }

    // Gauss-Legendre nodes/weights on [-1, 1] by Newton on Legendre polynomials.
    static std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int m) {
        std::vector<double> x(static_cast<size_t>(m)), w(static_cast<size_t>(m));
        for (int i = 0; i < m; ++i) {
            double t = std::cos(kPi * (i + 0.75) / (m + 0.5));
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = t;
                for (int k = 2; k <= m; ++k) {
                    const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                const double dp = m * (t * p1 - p0) / (t * t - 1.0);
                const double dt = p1 / dp;
                t -= dt;
                if (std::abs(dt) < 1e-15) break;
            }
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= m; ++k) {
                const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = m * (t * p1 - p0) / (t * t - 1.0);
            x[static_cast<size_t>(i)] = t;
            w[static_cast<size_t>(i)] = 2.0 / ((1.0 - t * t) * dp * dp);
        }
        return {x, w};
    }
};

// Second-derivative symbol of Gamma along (i, j):
//   d_i d_j Gamma(y) = (delta_ij - n theta_i theta_j) / (sigma_n |y|^n).
inline CZKernel cz_second_gamma(int i, int j, int n) {
    const double sn = sphere_area(n);
    return CZKernel(
        [i, j, n, sn](const double* t) {
            return ((i == j ? 1.0 : 0.0) - n * t[i] * t[j]) / sn;
        },
        static_cast<double>(n) / sn + 1.0 / sn, n);
}

namespace detail {

// Average of a kernel over m^n midpoint subcells of the offset cell.
template <class K>
double subcell_average(const Grid& g, const int* off, int m, K&& kern) {
    const int n = g.n;
    const double h = g.h();
    i64 count = 1;
    for (int a = 0; a < n; ++a) count *= m;
    double acc = 0;
    std::vector<double> y(static_cast<size_t>(n));
    for (i64 t = 0; t < count; ++t) {
        i64 rem = t;
        for (int a = n - 1; a >= 0; --a) {
            const int s = static_cast<int>(rem % m);
            rem /= m;
            y[static_cast<size_t>(a)] = (off[a] + (s + 0.5) / m - 0.5) * h;
        }
        acc += kern(y.data());
    }
    return acc / static_cast<double>(count);
}

}  // namespace detail

// Principal-value convolution with a CZ kernel:
//   out(x) = sum_{y != x} S(x - y) f(y) h^n,
// self cell skipped (the mean-zero symbol kills the leading term), offsets
// within r_cut averaged over 4^n midpoint subcells, plain midpoint beyond.
inline ScalarField cz_apply(const ScalarField& f, const CZKernel& k, double r_cut) {
    const DomainSpec& d = *f.dom;
    const Grid& g = d.grid;
    if (g.n != k.n) throw std::invalid_argument("cz_apply: dimension mismatch");
    const double h = g.h();
    if (!(r_cut >= h)) throw std::invalid_argument("cz_apply: r_cut below grid spacing");
    f.check_finite("cz_apply");
    const double rcells2 = (r_cut / h) * (r_cut / h) + 1e-9;
    std::vector<int> maxoff(static_cast<size_t>(g.n));
    for (int a = 0; a < g.n; ++a) maxoff[static_cast<size_t>(a)] = g.shape[a] - 1;
    PaddedConv conv(g.shape, maxoff);
    conv.load_signal(to_dense(f));
    std::vector<double> dense = conv.apply([&](const int* off) {
        double o2 = 0;
        for (int a = 0; a < g.n; ++a) o2 += static_cast<double>(off[a]) * off[a];
        if (o2 == 0.0) return 0.0;
        if (o2 <= rcells2)
            return detail::subcell_average(g, off, 4, [&](const double* y) { return k.full(y); });
        std::vector<double> y(static_cast<size_t>(g.n));
        for (int a = 0; a < g.n; ++a) y[static_cast<size_t>(a)] = off[a] * h;
        return k.full(y.data());
    });
    for (double& v : dense) v *= g.cell_volume();
    return from_dense(f.dom, dense);
}

// Spectral vector field on a periodic box: r2c coefficients per component.
struct SpectralVectorField {
    std::vector<int> shape;
    std::vector<double> lengths;  // box extent per axis
    std::vector<std::vector<std::complex<double>>> comp;
};

inline SpectralVectorField spectral_forward(const VectorField& u) {
    if (u.dom->kind != DomainKind::Box) throw std::invalid_argument("spectral: periodic box fields only");
    SpectralVectorField s;
    const Grid& g = u.grid();
    s.shape = g.shape;
    s.lengths.resize(static_cast<size_t>(g.n));
    for (int a = 0; a < g.n; ++a) s.lengths[static_cast<size_t>(a)] = g.extent(a);
    for (int a = 0; a < g.n; ++a) {
        ScalarField fa(u.dom);
        fa.values = u.comp[static_cast<size_t>(a)];
        s.comp.push_back(Spectral::forward(g.shape, to_dense(fa)));
    }
    return s;
}

inline VectorField spectral_inverse(const SpectralVectorField& s, const DomainPtr& dom) {
    VectorField u(dom);
    for (int a = 0; a < u.dims(); ++a) {
        std::vector<double> dense = Spectral::inverse(s.shape, s.comp[static_cast<size_t>(a)]);
        u.comp[static_cast<size_t>(a)] = from_dense(dom, dense).values;
    }
    return u;
}

// Per-mode projection onto the xi-orthogonal complement:
//   vhat = (I - xi xi^T / |xi|^2) uhat,
// the zero mode passes through unchanged (constants are divergence-free).
inline SpectralVectorField riesz_projection_symbol(const SpectralVectorField& uhat) {
    const int n = static_cast<int>(uhat.shape.size());
    SpectralVectorField out = uhat;
    const i64 nc = static_cast<i64>(uhat.comp[0].size());
    std::vector<int> k(static_cast<size_t>(n));
    std::vector<double> xi(static_cast<size_t>(n));
    for (i64 m = 0; m < nc; ++m) {
        Spectral::frequency(uhat.shape, m, k.data());
        double x2 = 0;
        for (int a = 0; a < n; ++a) {
            xi[static_cast<size_t>(a)] = 2.0 * kPi * k[static_cast<size_t>(a)] / uhat.lengths[static_cast<size_t>(a)];
            x2 += xi[static_cast<size_t>(a)] * xi[static_cast<size_t>(a)];
        }
        if (x2 == 0.0) continue;
        std::complex<double> dot(0, 0);
        for (int a = 0; a < n; ++a) dot += xi[static_cast<size_t>(a)] * uhat.comp[static_cast<size_t>(a)][static_cast<size_t>(m)];
        for (int a = 0; a < n; ++a)
            out.comp[static_cast<size_t>(a)][static_cast<size_t>(m)] -= xi[static_cast<size_t>(a)] * dot / x2;
    }
    return out;
}

}  // namespace mzh
