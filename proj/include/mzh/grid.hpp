#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mzh {

using i64 = std::int64_t;

// Uniform cell-centered lattice over an axis-aligned box.
// Cell (i_0,...,i_{n-1}) has center origin[d] + (i_d + 1/2) * spacing[d].
struct Grid {
    int n = 0;
    std::vector<int> shape;
    std::vector<double> origin;
    std::vector<double> spacing;

    Grid() = default;
    Grid(std::vector<int> shp, std::vector<double> org, std::vector<double> spc)
        : n(static_cast<int>(shp.size())), shape(std::move(shp)),
          origin(std::move(org)), spacing(std::move(spc)) {
        if (n < 1) throw std::invalid_argument("grid: rank must be at least 1");
        if (origin.size() != static_cast<size_t>(n) || spacing.size() != static_cast<size_t>(n))
            throw std::invalid_argument("grid: shape/origin/spacing rank mismatch");
        for (int d = 0; d < n; ++d) {
            if (shape[d] <= 0) throw std::invalid_argument("grid: nonpositive shape");
            if (!(spacing[d] > 0.0)) throw std::invalid_argument("grid: nonpositive spacing");
        }
    }

    // Isotropic grid over [lo, hi]^n with cells_per_axis cells on each axis.
    static Grid cube(int n, double lo, double hi, int cells_per_axis) {
        double h = (hi - lo) / cells_per_axis;
        return Grid(std::vector<int>(n, cells_per_axis), std::vector<double>(n, lo),
                    std::vector<double>(n, h));
    }

    i64 cell_count() const {
        i64 c = 1;
        for (int d = 0; d < n; ++d) c *= shape[d];
        return c;
    }

    double cell_volume() const {
        double v = 1.0;
        for (int d = 0; d < n; ++d) v *= spacing[d];
        return v;
    }

    bool isotropic() const {
        for (int d = 1; d < n; ++d)
            if (spacing[d] != spacing[0]) return false;
        return true;
    }

    double h() const {
        if (!isotropic()) throw std::invalid_argument("grid: anisotropic spacing where isotropic required");
        return spacing[0];
    }

    // Row-major (C order) strides, last axis fastest.
    std::vector<i64> strides() const {
        std::vector<i64> s(n);
        i64 acc = 1;
        for (int d = n - 1; d >= 0; --d) { s[d] = acc; acc *= shape[d]; }
        return s;
    }

    void unflatten(i64 flat, int* idx) const {
        for (int d = n - 1; d >= 0; --d) {
            idx[d] = static_cast<int>(flat % shape[d]);
            flat /= shape[d];
        }
    }

    i64 flatten(const int* idx) const {
        i64 f = 0;
        for (int d = 0; d < n; ++d) f = f * shape[d] + idx[d];
        return f;
    }

    void center_of(i64 flat, double* x) const {
        for (int d = n - 1; d >= 0; --d) {
            int i = static_cast<int>(flat % shape[d]);
            flat /= shape[d];
            x[d] = origin[d] + (i + 0.5) * spacing[d];
        }
    }

    double extent(int d) const { return shape[d] * spacing[d]; }

    // Diameter of the box.
    double diameter() const {
        double s = 0.0;
        for (int d = 0; d < n; ++d) s += extent(d) * extent(d);
        return std::sqrt(s);
    }

    bool operator==(const Grid& o) const {
        return n == o.n && shape == o.shape && origin == o.origin && spacing == o.spacing;
    }
};

enum class DomainKind { Box, Ball, HalfSpace, Graph, StarUnion, BoxMinusBall };

inline const char* domain_kind_name(DomainKind k) {
    switch (k) {
        case DomainKind::Box: return "box";
        case DomainKind::Ball: return "ball";
        case DomainKind::HalfSpace: return "halfspace";
        case DomainKind::Graph: return "graph";
        case DomainKind::StarUnion: return "star_union";
        case DomainKind::BoxMinusBall: return "box_minus_ball";
    }
    return "?";
}

// One star-shaped piece: a ball domain with a designated star-center ball.
struct StarPiece {
    std::vector<double> center;
    double radius = 0.0;
    std::vector<double> star_center;
    double star_radius = 0.0;
};

// Lattice domain: a kind, its geometric parameters, and the cell mask.
// Membership is decided at cell centers. Immutable after construction.
struct DomainSpec {
    DomainKind kind = DomainKind::Box;
    Grid grid;

    // geometric parameters (used per kind)
    std::vector<double> center;          // Ball, BoxMinusBall
    double radius = 0.0;                 // Ball, BoxMinusBall
    std::vector<double> star_center;     // Ball (star-center ball for divergence solves)
    double star_radius = 0.0;
    std::vector<double> sigma;           // Graph: boundary samples on the (n-1) lattice
    double lipschitz = 0.0;              // Graph: Lipschitz constant bound M
    std::vector<StarPiece> pieces;       // StarUnion

    std::vector<std::uint8_t> mask;      // per box cell
    std::vector<i64> cells;              // flat indices of mask cells, scan order
    std::vector<i64> compact_of_flat;    // flat -> compact index, -1 outside
    std::vector<double> centers;         // mask-cell centers, n doubles each

    i64 size() const { return static_cast<i64>(cells.size()); }
    bool in_mask(i64 flat) const { return mask[static_cast<size_t>(flat)] != 0; }
    const double* x(i64 compact) const { return centers.data() + compact * grid.n; }
    double cell_volume() const { return grid.cell_volume(); }
    double measure() const { return static_cast<double>(size()) * grid.cell_volume(); }

    bool same_layout(const DomainSpec& o) const {
        return grid == o.grid && mask == o.mask;
    }

    // Diameter over mask-cell centers is expensive; the box diameter is the
    // radius ladder bound we use instead.
    double diameter() const { return grid.diameter(); }

    static DomainSpec box(const Grid& g) {
        DomainSpec d;
        d.kind = DomainKind::Box;
        d.grid = g;
        d.finish([](const double*) { return true; });
        return d;
    }

    // Wrap an explicit mask; geometric parameters of `kind` are left unset, so
    // only mask-driven operations apply to the result.
    static DomainSpec from_mask(const Grid& g, std::vector<std::uint8_t> cell_mask,
                                DomainKind kind = DomainKind::Box) {
        if (static_cast<i64>(cell_mask.size()) != g.cell_count())
            throw std::invalid_argument("from_mask: mask size mismatch");
        DomainSpec d;
        d.kind = kind;
        d.grid = g;
        d.mask = std::move(cell_mask);
        d.collect();
        return d;
    }

    static DomainSpec ball(const Grid& g, std::vector<double> c, double r,
                           double star_radius_fraction = 0.85) {
        if (c.size() != static_cast<size_t>(g.n)) throw std::invalid_argument("ball: center rank mismatch");
        if (!(r > 0)) throw std::invalid_argument("ball: nonpositive radius");
        DomainSpec d;
        d.kind = DomainKind::Ball;
        d.grid = g;
        d.center = c;
        d.radius = r;
        d.star_center = c;
        d.star_radius = star_radius_fraction * r;
        d.finish([&](const double* x) {
            double s = 0;
            for (int k = 0; k < g.n; ++k) s += (x[k] - c[k]) * (x[k] - c[k]);
            return s < r * r;
        });
        return d;
    }

    // Half-space slab: the whole box, with the hyperplane {x_n = box bottom}
    // playing the flat boundary. Fields should vanish near the slab top.
    static DomainSpec half_space(const Grid& g) {
        DomainSpec d;
        d.kind = DomainKind::HalfSpace;
        d.grid = g;
        d.finish([](const double*) { return true; });
        return d;
    }

    // Region above the graph x_n > sigma(x'), sigma sampled at the cell
    // centers of the leading (n-1) axes (row-major).
    static DomainSpec graph(const Grid& g, std::vector<double> sigma_samples, double m_bound) {
        if (g.n < 2) throw std::invalid_argument("graph: need n >= 2");
        i64 cols = 1;
        for (int d = 0; d + 1 < g.n; ++d) cols *= g.shape[d];
        if (static_cast<i64>(sigma_samples.size()) != cols)
            throw std::invalid_argument("graph: sigma sample count mismatch");
        DomainSpec d;
        d.kind = DomainKind::Graph;
        d.grid = g;
        d.sigma = std::move(sigma_samples);
        d.lipschitz = m_bound;
        const int n = g.n;
        // sampled slope between lattice-adjacent columns must respect the bound
        {
            std::vector<i64> cstr(static_cast<size_t>(n - 1), 1);
            for (int k = n - 3; k >= 0; --k) cstr[k] = cstr[k + 1] * g.shape[k + 1];
            std::vector<int> ci(static_cast<size_t>(n - 1));
            for (i64 c = 0; c < cols; ++c) {
                i64 rem = c;
                for (int k = 0; k < n - 1; ++k) { ci[k] = static_cast<int>(rem / cstr[k]); rem %= cstr[k]; }
                for (int k = 0; k < n - 1; ++k) {
                    if (ci[k] + 1 >= g.shape[k]) continue;
                    const double ds = std::abs(d.sigma[static_cast<size_t>(c + cstr[k])] - d.sigma[static_cast<size_t>(c)]);
                    if (ds > m_bound * g.spacing[static_cast<size_t>(k)] * (1.0 + 1e-12))
                        throw std::invalid_argument("graph: sampled slope exceeds the stated bound");
                }
            }
        }
        std::vector<i64> str(static_cast<size_t>(n - 1), 1);
        for (int k = n - 3; k >= 0; --k) str[k] = str[k + 1] * g.shape[k + 1];
        std::vector<int> idx(n);
        grid_init(d);
        for (i64 f = 0; f < g.cell_count(); ++f) {
            g.unflatten(f, idx.data());
            i64 col = 0;
            for (int k = 0; k < n - 1; ++k) col += idx[k] * str[k];
            double xn = g.origin[n - 1] + (idx[n - 1] + 0.5) * g.spacing[n - 1];
            d.mask[static_cast<size_t>(f)] = xn > d.sigma[static_cast<size_t>(col)] ? 1 : 0;
        }
        d.collect();
        return d;
    }

    static DomainSpec star_union(const Grid& g, std::vector<StarPiece> ps) {
        if (ps.empty()) throw std::invalid_argument("star_union: no pieces");
        for (auto& p : ps) {
            if (p.center.size() != static_cast<size_t>(g.n))
                throw std::invalid_argument("star_union: piece rank mismatch");
            if (p.star_center.empty()) {
                p.star_center = p.center;
                p.star_radius = 0.85 * p.radius;
            }
        }
        DomainSpec d;
        d.kind = DomainKind::StarUnion;
        d.grid = g;
        d.pieces = std::move(ps);
        d.finish([&](const double* x) {
            for (const auto& p : d.pieces) {
                double s = 0;
                for (int k = 0; k < g.n; ++k) s += (x[k] - p.center[k]) * (x[k] - p.center[k]);
                if (s < p.radius * p.radius) return true;
            }
            return false;
        });
        return d;
    }

    // Exterior-domain stand-in: the box with a ball removed.
    static DomainSpec box_minus_ball(const Grid& g, std::vector<double> c, double r) {
        if (c.size() != static_cast<size_t>(g.n)) throw std::invalid_argument("box_minus_ball: center rank mismatch");
        DomainSpec d;
        d.kind = DomainKind::BoxMinusBall;
        d.grid = g;
        d.center = c;
        d.radius = r;
        d.finish([&](const double* x) {
            double s = 0;
            for (int k = 0; k < g.n; ++k) s += (x[k] - c[k]) * (x[k] - c[k]);
            return s >= r * r;
        });
        return d;
    }

  private:
    static void grid_init(DomainSpec& d) {
        d.mask.assign(static_cast<size_t>(d.grid.cell_count()), 0);
    }

    template <class Pred>
    void finish(Pred&& inside) {
        grid_init(*this);
        std::vector<double> x(static_cast<size_t>(grid.n));
        for (i64 f = 0; f < grid.cell_count(); ++f) {
            grid.center_of(f, x.data());
            mask[static_cast<size_t>(f)] = inside(x.data()) ? 1 : 0;
        }
        collect();
    }

    void collect() {
        const i64 total = grid.cell_count();
        compact_of_flat.assign(static_cast<size_t>(total), -1);
        cells.clear();
        for (i64 f = 0; f < total; ++f) {
            if (mask[static_cast<size_t>(f)]) {
                compact_of_flat[static_cast<size_t>(f)] = static_cast<i64>(cells.size());
                cells.push_back(f);
            }
        }
        if (cells.empty()) throw std::invalid_argument("domain: empty mask");
        centers.resize(cells.size() * grid.n);
        for (size_t k = 0; k < cells.size(); ++k)
            grid.center_of(cells[k], centers.data() + k * grid.n);
    }
};

using DomainPtr = std::shared_ptr<const DomainSpec>;

inline DomainPtr share(DomainSpec d) { return std::make_shared<const DomainSpec>(std::move(d)); }

// Scalar samples on the mask cells of a domain, in mask scan order.
struct ScalarField {
    DomainPtr dom;
    std::vector<double> values;

    ScalarField() = default;
    explicit ScalarField(DomainPtr d) : dom(std::move(d)), values(static_cast<size_t>(dom->size()), 0.0) {}

    i64 size() const { return dom->size(); }
    double& operator[](i64 k) { return values[static_cast<size_t>(k)]; }
    double operator[](i64 k) const { return values[static_cast<size_t>(k)]; }
    const Grid& grid() const { return dom->grid; }

    void check_finite(const char* where) const {
        for (double v : values)
            if (!std::isfinite(v)) throw std::runtime_error(std::string(where) + ": non-finite field value");
    }
};

struct VectorField {
    DomainPtr dom;
    std::vector<std::vector<double>> comp;

    VectorField() = default;
    explicit VectorField(DomainPtr d)
        : dom(std::move(d)),
          comp(static_cast<size_t>(dom->grid.n),
               std::vector<double>(static_cast<size_t>(dom->size()), 0.0)) {}

    i64 size() const { return dom->size(); }
    int dims() const { return dom->grid.n; }
    const Grid& grid() const { return dom->grid; }

    double magnitude(i64 k) const {
        double s = 0;
        for (const auto& c : comp) s += c[static_cast<size_t>(k)] * c[static_cast<size_t>(k)];
        return std::sqrt(s);
    }

    void check_finite(const char* where) const {
        for (const auto& c : comp)
            for (double v : c)
                if (!std::isfinite(v)) throw std::runtime_error(std::string(where) + ": non-finite field value");
    }
};

// Sample a callable at mask-cell centers.
template <class F>
ScalarField build_field(const DomainPtr& dom, F&& fn) {
    ScalarField f(dom);
    for (i64 k = 0; k < dom->size(); ++k) {
        f[k] = fn(dom->x(k));
        if (!std::isfinite(f[k]))
            throw std::invalid_argument("build_field: non-finite value at cell " + std::to_string(k));
    }
    return f;
}

template <class F>
VectorField build_vector_field(const DomainPtr& dom, F&& fn) {
    VectorField u(dom);
    std::vector<double> tmp(static_cast<size_t>(dom->grid.n));
    for (i64 k = 0; k < dom->size(); ++k) {
        fn(dom->x(k), tmp.data());
        for (int a = 0; a < dom->grid.n; ++a) {
            if (!std::isfinite(tmp[static_cast<size_t>(a)]))
                throw std::invalid_argument("build_vector_field: non-finite value at cell " + std::to_string(k));
            u.comp[static_cast<size_t>(a)][static_cast<size_t>(k)] = tmp[static_cast<size_t>(a)];
        }
    }
    return u;
}

// Extension by zero to the full grid box.
inline ScalarField zero_extend(const ScalarField& f) {
    DomainPtr box = share(DomainSpec::box(f.grid()));
    ScalarField g(box);
    const auto& d = *f.dom;
    for (i64 k = 0; k < d.size(); ++k) g[box->compact_of_flat[static_cast<size_t>(d.cells[static_cast<size_t>(k)])]] = f[k];
    return g;
}

inline VectorField zero_extend(const VectorField& u) {
    DomainPtr box = share(DomainSpec::box(u.grid()));
    VectorField g(box);
    const auto& d = *u.dom;
    for (int a = 0; a < u.dims(); ++a)
        for (i64 k = 0; k < d.size(); ++k)
            g.comp[static_cast<size_t>(a)][static_cast<size_t>(box->compact_of_flat[static_cast<size_t>(d.cells[static_cast<size_t>(k)])])] =
                u.comp[static_cast<size_t>(a)][static_cast<size_t>(k)];
    return g;
}

// Midpoint-rule integral over the mask.
inline double integral(const ScalarField& f) {
    double s = 0;
    for (double v : f.values) s += v;
    return s * f.dom->cell_volume();
}

// Dense (full box) view of a masked field, zeros outside.
inline std::vector<double> to_dense(const ScalarField& f) {
    std::vector<double> out(static_cast<size_t>(f.grid().cell_count()), 0.0);
    const auto& d = *f.dom;
    for (i64 k = 0; k < d.size(); ++k) out[static_cast<size_t>(d.cells[static_cast<size_t>(k)])] = f[k];
    return out;
}

inline ScalarField from_dense(const DomainPtr& dom, const std::vector<double>& dense) {
    ScalarField f(dom);
    for (i64 k = 0; k < dom->size(); ++k) f[k] = dense[static_cast<size_t>(dom->cells[static_cast<size_t>(k)])];
    return f;
}

}  // namespace mzh
