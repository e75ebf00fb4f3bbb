#pragma once

#include "mzh/grid.hpp"

namespace mzh {

// Flat index of the cell `step` cells away along `axis`, or -1 past the box edge.
inline i64 neighbor_flat(const Grid& g, const std::vector<i64>& strides, i64 flat, int axis, int step) {
    i64 i = (flat / strides[static_cast<size_t>(axis)]) % g.shape[axis];
    i64 j = i + step;
    if (j < 0 || j >= g.shape[axis]) return -1;
    return flat + static_cast<i64>(step) * strides[static_cast<size_t>(axis)];
}

namespace detail {

// Compact index of a same-domain neighbor, or -1 if off the box or off the mask.
inline i64 mask_neighbor(const DomainSpec& d, const std::vector<i64>& strides, i64 flat, int axis, int step) {
    i64 nf = neighbor_flat(d.grid, strides, flat, axis, step);
    if (nf < 0) return -1;
    return d.compact_of_flat[static_cast<size_t>(nf)];
}

}  // namespace detail

// Mask-aware partial derivative along one axis.
// Stencil ladder per cell: 4th-order centered, 2nd-order centered, one-sided,
// zero when the cell has no axis neighbors. order picks the top rung:
// 4 starts at 4th-order centered with 2nd-order one-sided fallback,
// 2 starts at 2nd-order centered with 2nd-order one-sided fallback,
// 1 uses 2nd-order centered with plain first-order one-sided fallback.
inline ScalarField derivative(const ScalarField& f, int axis, int order = 4) {
    const DomainSpec& d = *f.dom;
    const Grid& g = d.grid;
    if (axis < 0 || axis >= g.n) throw std::invalid_argument("derivative: axis out of range");
    if (order != 1 && order != 2 && order != 4)
        throw std::invalid_argument("derivative: order must be 1, 2 or 4");
    const double h = g.spacing[axis];
    const auto strides = g.strides();
    ScalarField out(f.dom);
    for (i64 k = 0; k < d.size(); ++k) {
        const i64 flat = d.cells[static_cast<size_t>(k)];
        const i64 m1 = detail::mask_neighbor(d, strides, flat, axis, -1);
        const i64 p1 = detail::mask_neighbor(d, strides, flat, axis, +1);
        if (m1 >= 0 && p1 >= 0) {
            if (order == 4) {
                const i64 m2 = detail::mask_neighbor(d, strides, flat, axis, -2);
                const i64 p2 = detail::mask_neighbor(d, strides, flat, axis, +2);
                if (m2 >= 0 && p2 >= 0) {
                    out[k] = (-f[p2] + 8.0 * f[p1] - 8.0 * f[m1] + f[m2]) / (12.0 * h);
                    continue;
                }
            }
            out[k] = (f[p1] - f[m1]) / (2.0 * h);
        } else if (p1 >= 0) {
            const i64 p2 = order == 1 ? -1 : detail::mask_neighbor(d, strides, flat, axis, +2);
            out[k] = p2 >= 0 ? (-3.0 * f[k] + 4.0 * f[p1] - f[p2]) / (2.0 * h)
                             : (f[p1] - f[k]) / h;
        } else if (m1 >= 0) {
            const i64 m2 = order == 1 ? -1 : detail::mask_neighbor(d, strides, flat, axis, -2);
            out[k] = m2 >= 0 ? (3.0 * f[k] - 4.0 * f[m1] + f[m2]) / (2.0 * h)
                             : (f[k] - f[m1]) / h;
        } else {
            out[k] = 0.0;
        }
    }
    return out;
}

inline VectorField gradient(const ScalarField& f, int order = 4) {
    VectorField g(f.dom);
    for (int a = 0; a < f.grid().n; ++a) g.comp[static_cast<size_t>(a)] = derivative(f, a, order).values;
    return g;
}

inline ScalarField divergence(const VectorField& u, int order = 4) {
    ScalarField out(u.dom);
    for (int a = 0; a < u.dims(); ++a) {
        ScalarField fa(u.dom);
        fa.values = u.comp[static_cast<size_t>(a)];
        ScalarField da = derivative(fa, a, order);
        for (i64 k = 0; k < out.size(); ++k) out[k] += da[k];
    }
    return out;
}

inline VectorField curl(const VectorField& u, int order = 4) {
    if (u.dims() != 3) throw std::invalid_argument("curl: needs n = 3");
    auto d = [&](int comp, int axis) {
        ScalarField fc(u.dom);
        fc.values = u.comp[static_cast<size_t>(comp)];
        return derivative(fc, axis, order);
    };
    VectorField w(u.dom);
    ScalarField d21 = d(2, 1), d12 = d(1, 2);
    ScalarField d02 = d(0, 2), d20 = d(2, 0);
    ScalarField d10 = d(1, 0), d01 = d(0, 1);
    for (i64 k = 0; k < w.size(); ++k) {
        w.comp[0][static_cast<size_t>(k)] = d21[k] - d12[k];
        w.comp[1][static_cast<size_t>(k)] = d02[k] - d20[k];
        w.comp[2][static_cast<size_t>(k)] = d10[k] - d01[k];
    }
    return w;
}

// Cells whose full `width`-neighborhood along every axis stays in the mask.
// Used to restrict error measurements away from stencil-degraded cells.
inline std::vector<std::uint8_t> interior_mask(const DomainSpec& d, int width) {
    const Grid& g = d.grid;
    const auto strides = g.strides();
    std::vector<std::uint8_t> keep(static_cast<size_t>(d.size()), 1);
    for (i64 k = 0; k < d.size(); ++k) {
        const i64 flat = d.cells[static_cast<size_t>(k)];
        for (int a = 0; a < g.n && keep[static_cast<size_t>(k)]; ++a)
            for (int s = -width; s <= width; ++s) {
                if (s == 0) continue;
                if (detail::mask_neighbor(d, strides, flat, a, s) < 0) { keep[static_cast<size_t>(k)] = 0; break; }
            }
    }
    return keep;
}

}  // namespace mzh
