#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mzh/grid.hpp"
#include "mzh/mollify.hpp"
#include "mzh/parallel.hpp"
#include "mzh/potentials.hpp"

namespace mzh {

namespace detail {

// Dense row-reduction with partial pivoting; a is row-major (m x m), b the
// right-hand side, both overwritten. Returns the solution in b.
inline void solve_dense(std::vector<double>& a, std::vector<double>& b, int m) {
    for (int col = 0; col < m; ++col) {
        int piv = col;
        for (int r = col + 1; r < m; ++r)
            if (std::abs(a[static_cast<size_t>(r * m + col)]) > std::abs(a[static_cast<size_t>(piv * m + col)])) piv = r;
        if (a[static_cast<size_t>(piv * m + col)] == 0.0) throw std::invalid_argument("solve_dense: singular system");
        if (piv != col) {
            for (int c = 0; c < m; ++c) std::swap(a[static_cast<size_t>(col * m + c)], a[static_cast<size_t>(piv * m + c)]);
            std::swap(b[static_cast<size_t>(col)], b[static_cast<size_t>(piv)]);
        }
        const double d = a[static_cast<size_t>(col * m + col)];
        for (int r = col + 1; r < m; ++r) {
            const double fac = a[static_cast<size_t>(r * m + col)] / d;
            if (fac == 0.0) continue;
            for (int c = col; c < m; ++c) a[static_cast<size_t>(r * m + c)] -= fac * a[static_cast<size_t>(col * m + c)];
            b[static_cast<size_t>(r)] -= fac * b[static_cast<size_t>(col)];
        }
    }
    for (int r = m - 1; r >= 0; --r) {
        double s = b[static_cast<size_t>(r)];
        for (int c = r + 1; c < m; ++c) s -= a[static_cast<size_t>(r * m + c)] * b[static_cast<size_t>(c)];
        b[static_cast<size_t>(r)] = s / a[static_cast<size_t>(r * m + r)];
    }
}

inline double inf_norm_rows(const std::vector<double>& a, int m) {
    double worst = 0;
    for (int r = 0; r < m; ++r) {
        double s = 0;
        for (int c = 0; c < m; ++c) s += std::abs(a[static_cast<size_t>(r * m + c)]);
        worst = std::max(worst, s);
    }
    return worst;
}

}  // namespace detail

// Averaging weight psi on [1, T]: a degree-K polynomial with unit mass and
// vanishing moments t^k, k = 1..K. Values outside [1, T] are zero.
struct PsiWeight {
    int K = 0;
    double T = 0;
    std::vector<double> coeff;           // monomial coefficients, degree 0..K
    double condition_estimate = 0;       // inf-norm condition of the moment system
    std::vector<double> moment_residuals;  // independent-quadrature residuals, k = 0..K
    int decay_order = 0;                 // enforced moment order; finite surrogate of rapid decay

    double operator()(double t) const {
        if (t < 1.0 || t > T) return 0.0;
        double v = 0;
        for (size_t j = coeff.size(); j-- > 0;) v = v * t + coeff[j];
        return v;
    }

    // Composite-Simpson moment, independent of the solve that chose coeff.
    double moment(int k, int panels = 4096) const {
        const double h = (T - 1.0) / (2.0 * panels);
        double s = 0;
        for (int i = 0; i <= 2 * panels; ++i) {
            const double t = 1.0 + i * h;
            const double w = (i == 0 || i == 2 * panels) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            s += w * std::pow(t, k) * (*this)(t);
        }
        return s * h / 3.0;
    }
};

// Solve the (K+1)x(K+1) moment system for a degree-K polynomial on [1, T]:
// row k demands the k-th moment be 1 for k = 0 and 0 otherwise.
inline PsiWeight moment_weight(int K, double T) {
    if (K < 0) throw std::invalid_argument("moment_weight: K must be >= 0");
    if (!(T > 1.0)) throw std::invalid_argument("moment_weight: T must exceed 1");
    const int m = K + 1;
    std::vector<double> a(static_cast<size_t>(m * m));
    std::vector<double> b(static_cast<size_t>(m), 0.0);
    b[0] = 1.0;
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j) {
            const int p = k + j + 1;
            a[static_cast<size_t>(k * m + j)] = (std::pow(T, p) - 1.0) / p;
        }

    std::vector<double> lu = a;
    std::vector<double> sol = b;
    detail::solve_dense(lu, sol, m);

    // Condition estimate ||A||_inf * ||A^-1||_inf via explicit inverse columns.
    std::vector<double> inv(static_cast<size_t>(m * m), 0.0);
    for (int c = 0; c < m; ++c) {
        std::vector<double> lu2 = a;
        std::vector<double> e(static_cast<size_t>(m), 0.0);
        e[static_cast<size_t>(c)] = 1.0;
        detail::solve_dense(lu2, e, m);
        for (int r = 0; r < m; ++r) inv[static_cast<size_t>(r * m + c)] = e[static_cast<size_t>(r)];
    }
    const double cond = detail::inf_norm_rows(a, m) * detail::inf_norm_rows(inv, m);
    if (!(cond < 1e12)) {
        std::ostringstream os;
        os << "moment_weight: moment system condition " << cond
           << " too large; increase T or use a lower K";
        throw std::invalid_argument(os.str());
    }

    PsiWeight psi;
    psi.K = K;
    psi.T = T;
    psi.coeff = sol;
    psi.condition_estimate = cond;
    psi.decay_order = K;
    psi.moment_residuals.resize(static_cast<size_t>(m));
    for (int k = 0; k < m; ++k) {
        const double target = k == 0 ? 1.0 : 0.0;
        psi.moment_residuals[static_cast<size_t>(k)] = std::abs(psi.moment(k) - target);
        if (psi.moment_residuals[static_cast<size_t>(k)] > 1e-10) {
            std::ostringstream os;
            os << "moment_weight: moment " << k << " residual "
               << psi.moment_residuals[static_cast<size_t>(k)] << " exceeds 1e-10";
            throw std::invalid_argument(os.str());
        }
    }
    return psi;
}

// Smoothed vertical distance below a graph domain. theta lives on the
// complement mask (cells with x_n <= sigma(x')) and is strictly positive
// wherever the cell center lies strictly below the graph.
struct RegularizedDistance {
    DomainPtr graph;        // the domain extended from
    DomainPtr complement;   // box cells not in the graph mask
    ScalarField theta;      // on complement
    std::vector<double> sigma_eps;  // lifted mollified graph, per column
    double lift = 0;        // additive lift keeping sigma_eps >= sigma
    double c1 = 0, c2 = 0;  // measured theta/distance bracket over sampled cells
    double m = 0;           // slope constant: m * theta >= sigma(x') - x_n sampled
    double m_initial = 0;   // sqrt(1 + M^2) before any adjustment
    bool m_adjusted = false;

    double delta_star(i64 k) const { return 2.0 * m * theta[k]; }
};

namespace detail {

// Column lattice of the leading n-1 axes: shape, strides, spacing.
struct ColumnLattice {
    int n1 = 0;
    std::array<int, 3> shape{};
    std::array<i64, 3> strides{};
    std::array<double, 3> spacing{};
    i64 count = 1;

    explicit ColumnLattice(const Grid& g) : n1(g.n - 1) {
        for (int a = 0; a < n1; ++a) {
            shape[static_cast<size_t>(a)] = g.shape[a];
            spacing[static_cast<size_t>(a)] = g.spacing[a];
            count *= g.shape[a];
        }
        i64 s = 1;
        for (int a = n1 - 1; a >= 0; --a) {
            strides[static_cast<size_t>(a)] = s;
            s *= g.shape[a];
        }
    }

    void unflatten(i64 col, int* idx) const {
        for (int a = 0; a < n1; ++a) {
            idx[a] = static_cast<int>(col / strides[static_cast<size_t>(a)]);
            col %= strides[static_cast<size_t>(a)];
        }
    }
};

// Bump-weighted average of sigma over column offsets within eps; the same
// profile the volume mollifier uses, renormalized on the column lattice.
inline std::vector<double> mollify_columns(const ColumnLattice& lat, const std::vector<double>& sigma,
                                           double eps) {
    const double hmin = *std::min_element(lat.spacing.begin(), lat.spacing.begin() + lat.n1);
    const int reach = static_cast<int>(std::ceil(eps / hmin));
    std::vector<std::array<int, 3>> offs;
    std::vector<double> wts;
    std::array<int, 3> o{};
    std::function<void(int)> rec = [&](int axis) {
        if (axis == lat.n1) {
            double r2 = 0;
            for (int a = 0; a < lat.n1; ++a) {
                const double d = o[static_cast<size_t>(a)] * lat.spacing[static_cast<size_t>(a)] / eps;
                r2 += d * d;
            }
            if (r2 < 1.0) {
                offs.push_back(o);
                wts.push_back(std::exp(-1.0 / (1.0 - r2)));
            }
            return;
        }
        for (int v = -reach; v <= reach; ++v) {
            o[static_cast<size_t>(axis)] = v;
            rec(axis + 1);
        }
    };
    rec(0);
    double total = 0;
    for (double w : wts) total += w;
    for (double& w : wts) w /= total;

    std::vector<double> out(sigma.size(), 0.0);
    std::array<int, 3> idx{};
    for (i64 col = 0; col < lat.count; ++col) {
        lat.unflatten(col, idx.data());
        double s = 0;
        for (size_t q = 0; q < offs.size(); ++q) {
            i64 src = 0;
            bool ok = true;
            for (int a = 0; a < lat.n1; ++a) {
                const int j = idx[static_cast<size_t>(a)] + offs[q][static_cast<size_t>(a)];
                if (j < 0 || j >= lat.shape[static_cast<size_t>(a)]) {
                    ok = false;
                    break;
                }
                src += j * lat.strides[static_cast<size_t>(a)];
            }
            // Clamp the sample at the lattice edge so flat graphs stay flat.
            if (!ok) {
                src = 0;
                for (int a = 0; a < lat.n1; ++a) {
                    const int j = std::clamp(idx[static_cast<size_t>(a)] + offs[q][static_cast<size_t>(a)], 0,
                                             lat.shape[static_cast<size_t>(a)] - 1);
                    src += j * lat.strides[static_cast<size_t>(a)];
                }
            }
            s += wts[q] * sigma[static_cast<size_t>(src)];
        }
        out[static_cast<size_t>(col)] = s;
    }
    return out;
}

inline i64 column_of_flat(const Grid& g, i64 flat, const ColumnLattice& lat) {
    int idx[8];
    g.unflatten(flat, idx);
    i64 col = 0;
    for (int a = 0; a < lat.n1; ++a) col += idx[a] * lat.strides[static_cast<size_t>(a)];
    return col;
}

}  // namespace detail

inline RegularizedDistance regularized_distance(const DomainPtr& graph_dom) {
    const DomainSpec& d = *graph_dom;
    if (d.kind != DomainKind::Graph) throw std::invalid_argument("regularized_distance: graph domain required");
    const Grid& g = d.grid;
    const int n = g.n;
    const double M = d.lipschitz;
    const detail::ColumnLattice lat(g);
    const double eps = 2.0 * g.h();

    RegularizedDistance rd;
    rd.graph = graph_dom;
    std::vector<double> smooth = detail::mollify_columns(lat, d.sigma, eps);
    double dip = 0;
    for (size_t c = 0; c < smooth.size(); ++c) dip = std::max(dip, d.sigma[c] - smooth[c]);
    rd.lift = dip;
    for (double& v : smooth) v += dip;
    rd.sigma_eps = std::move(smooth);

    std::vector<std::uint8_t> comp_mask(d.mask.size());
    for (size_t k = 0; k < d.mask.size(); ++k) comp_mask[k] = d.mask[k] ? 0 : 1;
    rd.complement = share(DomainSpec::from_mask(g, std::move(comp_mask)));

    const double slope_norm = std::sqrt(1.0 + M * M);
    rd.theta = ScalarField(rd.complement);
    const DomainSpec& comp = *rd.complement;
    for (i64 k = 0; k < comp.size(); ++k) {
        const i64 col = detail::column_of_flat(g, comp.cells[static_cast<size_t>(k)], lat);
        const double xn = comp.x(k)[n - 1];
        rd.theta[k] = std::max(rd.sigma_eps[static_cast<size_t>(col)] - xn, 0.0) / slope_norm;
    }

    // Graph-inequality constant: worst (sigma - x_n) / theta over complement
    // cells strictly below the graph. The lift keeps the ratio finite.
    rd.m_initial = slope_norm;
    double m_req = 0;
    for (i64 k = 0; k < comp.size(); ++k) {
        const i64 col = detail::column_of_flat(g, comp.cells[static_cast<size_t>(k)], lat);
        const double gap = d.sigma[static_cast<size_t>(col)] - comp.x(k)[n - 1];
        if (gap <= 0) continue;
        if (rd.theta[k] <= 0) throw std::runtime_error("regularized_distance: theta vanished below the graph");
        m_req = std::max(m_req, gap / rd.theta[k]);
    }
    rd.m = std::max(rd.m_initial, m_req);
    rd.m_adjusted = rd.m > rd.m_initial;

    // Two-sided comparability against brute-force distance to the graph
    // surface samples, on a stride subsample when the complement is large.
    // Cells within one spacing of the surface are skipped: the cell-center
    // distance there is dominated by lattice placement, not by theta.
    const i64 sample_cap = 4000;
    const i64 stride = std::max<i64>(1, comp.size() / sample_cap);
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0;
    for (i64 k = 0; k < comp.size(); k += stride) {
        const double* x = comp.x(k);
        double best = std::numeric_limits<double>::infinity();
        int idx[8];
        for (i64 col = 0; col < lat.count; ++col) {
            lat.unflatten(col, idx);
            double d2 = 0;
            for (int a = 0; a < n - 1; ++a) {
                const double ya = g.origin[a] + (idx[a] + 0.5) * g.spacing[a];
                d2 += (x[a] - ya) * (x[a] - ya);
            }
            const double dz = x[n - 1] - d.sigma[static_cast<size_t>(col)];
            d2 += dz * dz;
            best = std::min(best, d2);
        }
        const double dist = std::sqrt(best);
        if (dist < g.h() || rd.theta[k] <= 0) continue;
        const double ratio = rd.theta[k] / dist;
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
    }
    rd.c1 = std::isfinite(lo) ? lo : 0.0;
    rd.c2 = hi;
    return rd;
}

// Reach of f(x', x_n + t * delta_star) over the graph domain, averaged by psi
// on [1, T] with Gauss-Legendre nodes. Equals f on the graph mask exactly.
inline ScalarField extend_special_lipschitz(const ScalarField& f, const PsiWeight& psi,
                                            const RegularizedDistance& rd,
                                            i64* fallback_count = nullptr) {
    const DomainSpec& d = *f.dom;
    if (d.kind != DomainKind::Graph) throw std::invalid_argument("extend_special_lipschitz: graph-domain field required");
    if (!d.same_layout(*rd.graph)) throw std::invalid_argument("extend_special_lipschitz: distance built on a different domain");
    const Grid& g = d.grid;
    const int n = g.n;
    const int nz = g.shape[n - 1];
    const double hz = g.spacing[n - 1];
    const double z0 = g.origin[n - 1];
    const i64 zstride = g.strides()[static_cast<size_t>(n - 1)];
    const detail::ColumnLattice lat(g);

    // First in-mask z index per column; the mask is contiguous above the graph.
    std::vector<int> zmin(static_cast<size_t>(lat.count), nz);
    for (i64 k = 0; k < d.size(); ++k) {
        const i64 flat = d.cells[static_cast<size_t>(k)];
        const i64 col = detail::column_of_flat(g, flat, lat);
        const int iz = static_cast<int>((flat / zstride) % nz);
        zmin[static_cast<size_t>(col)] = std::min(zmin[static_cast<size_t>(col)], iz);
    }

    const DomainSpec& comp = *rd.complement;
    const double top_center = z0 + (nz - 0.5) * hz;
    double overshoot = 0;
    for (i64 k = 0; k < comp.size(); ++k) {
        const double zmax = comp.x(k)[n - 1] + psi.T * rd.delta_star(k);
        overshoot = std::max(overshoot, zmax - top_center);
    }
    if (overshoot > 0) {
        std::ostringstream os;
        os << "extend_special_lipschitz: ray exits the box; pad the top by at least "
           << static_cast<i64>(std::ceil(overshoot / hz)) << " cells (" << overshoot << ")";
        throw std::invalid_argument(os.str());
    }

    const auto gl = CZKernel::gauss_legendre(24);  // nodes on [-1, 1]
    std::vector<double> dense = to_dense(f);

    DomainPtr box = share(DomainSpec::box(g));
    ScalarField out(box);
    for (i64 k = 0; k < d.size(); ++k) out[box->compact_of_flat[static_cast<size_t>(d.cells[static_cast<size_t>(k)])]] = f[k];

    std::atomic<i64> fallbacks{0};
    parallel_for(static_cast<i64>(0), comp.size(), [&](i64 k) {
        const i64 flat = comp.cells[static_cast<size_t>(k)];
        const i64 col = detail::column_of_flat(g, flat, lat);
        const i64 col_flat0 = flat - (static_cast<i64>((flat / zstride) % nz)) * zstride;
        const double xn = comp.x(k)[n - 1];
        const double ds = rd.delta_star(k);
        const int izm = zmin[static_cast<size_t>(col)];
        double acc = 0;
        for (size_t q = 0; q < gl.first.size(); ++q) {
            const double t = 1.0 + (psi.T - 1.0) * 0.5 * (gl.first[q] + 1.0);
            const double w = (psi.T - 1.0) * 0.5 * gl.second[q] * psi(t);
            const double zpos = xn + t * ds;
            double s = (zpos - z0) / hz - 0.5;
            if (s < 1e-9 && s > -1e-9) s = 0;
            int i0 = static_cast<int>(std::floor(s));
            double frac = s - i0;
            if (frac < 1e-9) frac = 0;
            else if (frac > 1.0 - 1e-9) { frac = 0; ++i0; }
            double val;
            if (i0 >= izm) {
                const double a = dense[static_cast<size_t>(col_flat0 + i0 * zstride)];
                const double b = frac == 0 ? 0.0 : dense[static_cast<size_t>(col_flat0 + (i0 + 1) * zstride)];
                val = frac == 0 ? a : (1.0 - frac) * a + frac * b;
            } else if (i0 == izm - 1 && frac > 0) {
                // Lower node just below the mask: take the in-mask endpoint.
                val = dense[static_cast<size_t>(col_flat0 + (i0 + 1) * zstride)];
                ++fallbacks;
            } else if (izm < nz) {
                val = dense[static_cast<size_t>(col_flat0 + izm * zstride)];
                ++fallbacks;
            } else {
                val = 0;
                ++fallbacks;
            }
            acc += w * val;
        }
        out[box->compact_of_flat[static_cast<size_t>(flat)]] = acc;
    });
    if (fallback_count) *fallback_count = fallbacks.load();
    out.check_finite("extend_special_lipschitz");
    return out;
}

// A rigid chart: world = rot * chart + shift, with a graph domain in chart
// coordinates and a cutoff on the world box.
struct LipschitzChart {
    std::array<double, 9> rot{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
    std::array<double, 3> shift{0, 0, 0};
    DomainPtr graph;
    ScalarField cutoff;  // on the world box domain
};

namespace detail {

// Trilinear sample of a dense box array at a physical point; zero outside the
// node hull. Nodes sit at cell centers; near-node fractions snap for bitwise
// identity on lattice-aligned charts.
inline double trilinear(const Grid& g, const std::vector<double>& dense, const double* x) {
    int base[3];
    double frac[3];
    for (int a = 0; a < g.n; ++a) {
        double s = (x[a] - g.origin[a]) / g.spacing[a] - 0.5;
        int i0 = static_cast<int>(std::floor(s));
        double fr = s - i0;
        if (fr < 1e-12) fr = 0;
        else if (fr > 1.0 - 1e-12) { fr = 0; ++i0; }
        base[a] = i0;
        frac[a] = fr;
    }
    const auto str = g.strides();
    double acc = 0;
    const int corners = 1 << g.n;
    for (int c = 0; c < corners; ++c) {
        double w = 1;
        i64 flat = 0;
        bool inside = true;
        for (int a = 0; a < g.n; ++a) {
            const int bit = (c >> a) & 1;
            const double wa = bit ? frac[a] : 1.0 - frac[a];
            if (wa == 0.0) { w = 0; break; }
            const int j = base[a] + bit;
            if (j < 0 || j >= g.shape[a]) { inside = false; break; }
            w *= wa;
            flat += j * str[static_cast<size_t>(a)];
        }
        if (inside && w != 0.0) acc += w * dense[static_cast<size_t>(flat)];
    }
    return acc;
}

inline void apply_rot(const std::array<double, 9>& r, const double* x, double* y) {
    for (int i = 0; i < 3; ++i)
        y[i] = r[static_cast<size_t>(3 * i)] * x[0] + r[static_cast<size_t>(3 * i + 1)] * x[1] +
               r[static_cast<size_t>(3 * i + 2)] * x[2];
}

inline void apply_rot_t(const std::array<double, 9>& r, const double* x, double* y) {
    for (int i = 0; i < 3; ++i)
        y[i] = r[static_cast<size_t>(i)] * x[0] + r[static_cast<size_t>(3 + i)] * x[1] +
               r[static_cast<size_t>(6 + i)] * x[2];
}

inline std::string cell_name(const Grid& g, i64 flat) {
    double x[8];
    g.center_of(flat, x);
    std::ostringstream os;
    os << "cell " << flat << " at (";
    for (int a = 0; a < g.n; ++a) os << (a ? ", " : "") << x[a];
    os << ")";
    return os.str();
}

}  // namespace detail

// Partition-of-unity gluing of per-chart extensions:
//   lam_plus * (sum_i cutoff_i * E_i(cutoff_i * f)) / (sum_i cutoff_i^2) + lam_minus * f.
// Output cells inside the domain mask carry f verbatim.
inline ScalarField extend_glued(const ScalarField& f, const std::vector<LipschitzChart>& charts,
                                const ScalarField& lam_plus, const ScalarField& lam_minus,
                                const PsiWeight& psi) {
    const DomainSpec& d = *f.dom;
    const Grid& g = d.grid;
    if (g.n != 3) throw std::invalid_argument("extend_glued: three dimensions required");
    if (charts.empty()) throw std::invalid_argument("extend_glued: no charts");
    DomainPtr box = share(DomainSpec::box(g));
    auto box_layout = [&](const ScalarField& s, const char* who) {
        if (!(s.dom->kind == DomainKind::Box && s.dom->grid == g))
            throw std::invalid_argument(std::string("extend_glued: ") + who + " must live on the full box");
    };
    box_layout(lam_plus, "lam_plus");
    box_layout(lam_minus, "lam_minus");
    for (const auto& ch : charts) {
        box_layout(ch.cutoff, "chart cutoff");
        if (!ch.graph || ch.graph->kind != DomainKind::Graph)
            throw std::invalid_argument("extend_glued: chart needs a graph domain");
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k)
                    s += ch.rot[static_cast<size_t>(3 * k + i)] * ch.rot[static_cast<size_t>(3 * k + j)];
                if (std::abs(s - (i == j ? 1.0 : 0.0)) > 1e-10)
                    throw std::invalid_argument("extend_glued: chart rotation is not orthonormal");
            }
    }

    // Partition checks: lam_plus + lam_minus = 1 on the mask; sum of squared
    // cutoffs >= 1 on supp lam_plus dilated by one cell.
    for (i64 k = 0; k < d.size(); ++k) {
        const i64 flat = d.cells[static_cast<size_t>(k)];
        const i64 kb = box->compact_of_flat[static_cast<size_t>(flat)];
        if (std::abs(lam_plus[kb] + lam_minus[kb] - 1.0) > 1e-10)
            throw std::invalid_argument("extend_glued: lam_plus + lam_minus != 1 on the domain at " +
                                        detail::cell_name(g, flat));
    }
    {
        const auto str = g.strides();
        std::vector<int> idx(3);
        for (i64 flat = 0; flat < g.cell_count(); ++flat) {
            bool near_supp = false;
            g.unflatten(flat, idx.data());
            for (int a = 0; a < 3 && !near_supp; ++a)
                for (int sgn = -1; sgn <= 1 && !near_supp; ++sgn) {
                    const int j = idx[static_cast<size_t>(a)] + sgn;
                    if (j < 0 || j >= g.shape[a]) continue;
                    const i64 nb = flat + static_cast<i64>(sgn) * str[static_cast<size_t>(a)];
                    if (lam_plus[nb] != 0.0) near_supp = true;
                }
            if (!near_supp) continue;
            double ss = 0;
            for (const auto& ch : charts) ss += ch.cutoff[flat] * ch.cutoff[flat];
            if (ss < 1.0 - 1e-10)
                throw std::invalid_argument("extend_glued: cutoff squares fall below 1 near supp lam_plus at " +
                                            detail::cell_name(g, flat));
        }
    }

    std::vector<double> dense_f = to_dense(f);
    std::vector<std::vector<double>> chart_ext(charts.size());
    for (size_t ci = 0; ci < charts.size(); ++ci) {
        const auto& ch = charts[ci];
        std::vector<double> weighted(dense_f.size());
        for (i64 flat = 0; flat < g.cell_count(); ++flat)
            weighted[static_cast<size_t>(flat)] = dense_f[static_cast<size_t>(flat)] * ch.cutoff[flat];
        ScalarField cf(ch.graph);
        for (i64 k = 0; k < ch.graph->size(); ++k) {
            double w[3];
            detail::apply_rot(ch.rot, ch.graph->x(k), w);
            for (int a = 0; a < 3; ++a) w[a] += ch.shift[static_cast<size_t>(a)];
            cf[k] = detail::trilinear(g, weighted, w);
        }
        RegularizedDistance rd = regularized_distance(ch.graph);
        ScalarField ec = extend_special_lipschitz(cf, psi, rd);
        chart_ext[ci] = to_dense(ec);
    }

    ScalarField out(box);
    for (i64 k = 0; k < d.size(); ++k)
        out[box->compact_of_flat[static_cast<size_t>(d.cells[static_cast<size_t>(k)])]] = f[k];
    for (i64 flat = 0; flat < g.cell_count(); ++flat) {
        if (d.in_mask(flat)) continue;
        const i64 kb = box->compact_of_flat[static_cast<size_t>(flat)];
        const double lp = lam_plus[kb];
        if (lp == 0.0) {
            out[kb] = 0.0;
            continue;
        }
        double num = 0, den = 0;
        double xw[3];
        g.center_of(flat, xw);
        for (size_t ci = 0; ci < charts.size(); ++ci) {
            const auto& ch = charts[ci];
            const double lam = ch.cutoff[kb];
            den += lam * lam;
            if (lam == 0.0) continue;
            double rel[3], xc[3];
            for (int a = 0; a < 3; ++a) rel[a] = xw[a] - ch.shift[static_cast<size_t>(a)];
            detail::apply_rot_t(ch.rot, rel, xc);
            num += lam * detail::trilinear(ch.graph->grid, chart_ext[ci], xc);
        }
        if (den < 1e-12)
            throw std::invalid_argument("extend_glued: vanishing cutoff squares under supp lam_plus at " +
                                        detail::cell_name(g, flat));
        out[kb] = lp * num / den;
    }
    out.check_finite("extend_glued");
    return out;
}

}  // namespace mzh
