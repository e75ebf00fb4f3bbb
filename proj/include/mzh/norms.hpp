#pragma once

#include <algorithm>
#include <cmath>

#include "mzh/fft.hpp"
#include "mzh/grid.hpp"

namespace mzh {

// Exponent pair for the local means sup_{x,R} R^{-lambda/q} ||f||_{L^q(B(x,R))}.
struct MorreyParams {
    int n = 3;
    double q = 2.0;
    double lambda = 0.0;

    MorreyParams() = default;
    MorreyParams(int n_, double q_, double lambda_) : n(n_), q(q_), lambda(lambda_) {
        if (!(q > 1.0) || !std::isfinite(q)) throw std::invalid_argument("morrey: need 1 < q < inf");
        if (!(lambda >= 0.0) || !(lambda < n)) throw std::invalid_argument("morrey: need 0 <= lambda < n");
    }

    double q_prime() const { return q / (q - 1.0); }
    double alpha() const { return (n - lambda) / q; }
    MorreyParams conjugate() const { return MorreyParams(n, q_prime(), lambda); }
};

// Discretization of the sup over centers and radii: centers are the mask
// cells (optionally stride-subsampled), radii an increasing ladder.
struct BallSampler {
    int center_stride = 1;
    std::vector<double> radii;

    void validate(double h) const {
        if (radii.empty()) throw std::invalid_argument("sampler: empty radius set");
        if (center_stride < 1) throw std::invalid_argument("sampler: stride < 1");
        double prev = 0.0;
        for (double r : radii) {
            if (!(r > prev)) throw std::invalid_argument("sampler: radii not strictly increasing");
            prev = r;
        }
        if (radii.front() < h * (1.0 - 1e-12)) throw std::invalid_argument("sampler: radius below grid spacing");
    }

    static BallSampler dyadic(double rmin, double rmax) {
        BallSampler s;
        for (double r = rmin; r <= rmax * (1.0 + 1e-12); r *= 2.0) s.radii.push_back(r);
        return s;
    }

    static BallSampler geometric(double rmin, double rmax, int count) {
        if (count < 1) throw std::invalid_argument("sampler: count < 1");
        BallSampler s;
        if (count == 1) { s.radii.push_back(rmax); return s; }
        const double ratio = std::pow(rmax / rmin, 1.0 / (count - 1));
        for (int j = 0; j < count; ++j) s.radii.push_back(rmin * std::pow(ratio, j));
        return s;
    }

    // Default ladder for a domain: geometric from h to the box diameter.
    static BallSampler standard(const DomainSpec& d, int count = 32) {
        return geometric(d.grid.h(), d.diameter(), count);
    }
};

inline double lq_norm(const ScalarField& f, double q) {
    if (!std::isfinite(q)) {
        double m = 0;
        for (double v : f.values) m = std::max(m, std::abs(v));
        return m;
    }
    double s = 0;
    for (double v : f.values) s += std::pow(std::abs(v), q);
    return std::pow(s * f.dom->cell_volume(), 1.0 / q);
}

inline double lq_norm(const VectorField& u, double q) {
    ScalarField m(u.dom);
    for (i64 k = 0; k < u.size(); ++k) m[k] = u.magnitude(k);
    return lq_norm(m, q);
}

inline double l2_norm(const ScalarField& f) { return lq_norm(f, 2.0); }
inline double l2_norm(const VectorField& u) { return lq_norm(u, 2.0); }

// Quadrature of (int |f|^q (1+|x|^2)^{-kappa/2})^{1/q} over the mask.
inline double weighted_lq_norm(const ScalarField& f, double q, double kappa) {
    const DomainSpec& d = *f.dom;
    double s = 0;
    for (i64 k = 0; k < d.size(); ++k) {
        const double* x = d.x(k);
        double r2 = 0;
        for (int a = 0; a < d.grid.n; ++a) r2 += x[a] * x[a];
        s += std::pow(std::abs(f[k]), q) * std::pow(1.0 + r2, -0.5 * kappa);
    }
    return std::pow(s * d.cell_volume(), 1.0 / q);
}

namespace detail {

// Per-radius lattice ball sums of a dense nonnegative box array:
//   S_R(x) = sum_{|y-x| < R} g(y) * cell_volume,
// one padded convolution per radius, shared signal transform.
class BallSums {
  public:
    BallSums(const Grid& g, std::vector<double> dense_weighted)
        : grid_(g), conv_(g.shape, max_offsets(g)) {
        conv_.load_signal(dense_weighted);
    }

    std::vector<double> at_radius(double R) const {
        const int n = grid_.n;
        const double vol = grid_.cell_volume();
        std::vector<double> out = conv_.apply([&](const int* off) {
            double d2 = 0;
            for (int a = 0; a < n; ++a) {
                const double da = off[a] * grid_.spacing[a];
                d2 += da * da;
            }
            return d2 < R * R ? 1.0 : 0.0;
        });
        for (double& v : out) v = std::max(v, 0.0) * vol;
        return out;
    }

  private:
    static std::vector<int> max_offsets(const Grid& g) {
        std::vector<int> m(static_cast<size_t>(g.n));
        for (int a = 0; a < g.n; ++a) m[static_cast<size_t>(a)] = g.shape[a] - 1;
        return m;
    }

    Grid grid_;
    PaddedConv conv_;
};

}  // namespace detail

// sup over sampled centers and radii of R^{-lambda/q} ||f||_{L^q(Omega cap B(x,R))}.
// Ball membership at cell centers with strict inequality |y - x| < R.
inline double morrey_norm(const ScalarField& f, const MorreyParams& p, const BallSampler& s) {
    const DomainSpec& d = *f.dom;
    if (p.n != d.grid.n) throw std::invalid_argument("morrey_norm: dimension mismatch");
    s.validate(d.grid.h());
    f.check_finite("morrey_norm");
    std::vector<double> gq = to_dense(f);
    for (double& v : gq) v = std::pow(std::abs(v), p.q);
    detail::BallSums sums(d.grid, std::move(gq));
    double best = 0;
    for (double R : s.radii) {
        const std::vector<double> sr = sums.at_radius(R);
        const double w = std::pow(R, -p.lambda / p.q);
        double cellmax = 0;
        for (i64 k = 0; k < d.size(); k += s.center_stride)
            cellmax = std::max(cellmax, sr[static_cast<size_t>(d.cells[static_cast<size_t>(k)])]);
        best = std::max(best, w * std::pow(cellmax, 1.0 / p.q));
    }
    return best;
}

inline double morrey_norm(const VectorField& u, const MorreyParams& p, const BallSampler& s) {
    ScalarField m(u.dom);
    for (i64 k = 0; k < u.size(); ++k) m[k] = u.magnitude(k);
    return morrey_norm(m, p, s);
}

template <class FieldT>
double morrey_norm(const FieldT& f, const MorreyParams& p) {
    return morrey_norm(f, p, BallSampler::standard(*f.dom));
}

// Brute-force reference path, O(cells^2) per radius. Small grids only.
inline double morrey_norm_direct(const ScalarField& f, const MorreyParams& p, const BallSampler& s) {
    const DomainSpec& d = *f.dom;
    s.validate(d.grid.h());
    const double vol = d.cell_volume();
    double best = 0;
    for (i64 c = 0; c < d.size(); c += s.center_stride) {
        const double* xc = d.x(c);
        for (double R : s.radii) {
            double acc = 0;
            for (i64 k = 0; k < d.size(); ++k) {
                const double* y = d.x(k);
                double d2 = 0;
                for (int a = 0; a < d.grid.n; ++a) d2 += (y[a] - xc[a]) * (y[a] - xc[a]);
                if (d2 < R * R) acc += std::pow(std::abs(f[k]), p.q);
            }
            best = std::max(best, std::pow(R, -p.lambda / p.q) * std::pow(acc * vol, 1.0 / p.q));
        }
    }
    return best;
}

// Pointwise sup over sampled radii of r^{-n} * (lattice sum of |f| over B(x,r)).
// The r^{-n} scaling (no ball-volume factor) makes the constant-field limit v_n.
inline ScalarField maximal_function(const ScalarField& f, const BallSampler& s) {
    const DomainSpec& d = *f.dom;
    s.validate(d.grid.h());
    f.check_finite("maximal_function");
    std::vector<double> ga = to_dense(f);
    for (double& v : ga) v = std::abs(v);
    detail::BallSums sums(d.grid, std::move(ga));
    ScalarField out(f.dom);
    for (double R : s.radii) {
        const std::vector<double> sr = sums.at_radius(R);
        const double w = std::pow(R, -static_cast<double>(d.grid.n));
        for (i64 k = 0; k < d.size(); ++k)
            out[k] = std::max(out[k], w * sr[static_cast<size_t>(d.cells[static_cast<size_t>(k)])]);
    }
    return out;
}

// One term of a constructed block decomposition: coefficient, ball, and the
// tile (as flat cell indices) carrying the block's support.
struct Block {
    double coefficient = 0;
    std::vector<double> center;
    double radius = 0;
    std::vector<i64> cells;
};

struct BlockDecomposition {
    std::vector<Block> blocks;
    double total() const {
        double s = 0;
        for (const auto& b : blocks) s += b.coefficient;
        return s;
    }
};

struct BlockNormBounds {
    double lower = 0;
    double upper = 0;
    BlockDecomposition witness;
};

namespace detail {

// Tile the box into cubes of `side` cells; one block per nonempty tile,
// ball = tile circumball, coefficient = R^{lambda/q'} ||f||_{L^q(tile)}.
inline BlockDecomposition tile_decomposition(const ScalarField& f, const MorreyParams& p, int side) {
    const DomainSpec& d = *f.dom;
    const Grid& g = d.grid;
    const int n = g.n;
    std::vector<int> tiles(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) tiles[static_cast<size_t>(a)] = (g.shape[a] + side - 1) / side;
    i64 ntiles = 1;
    for (int a = 0; a < n; ++a) ntiles *= tiles[static_cast<size_t>(a)];
    std::vector<double> mass(static_cast<size_t>(ntiles), 0.0);
    std::vector<std::vector<i64>> members(static_cast<size_t>(ntiles));
    std::vector<int> idx(static_cast<size_t>(n));
    for (i64 k = 0; k < d.size(); ++k) {
        if (f[k] == 0.0) continue;
        g.unflatten(d.cells[static_cast<size_t>(k)], idx.data());
        i64 t = 0;
        for (int a = 0; a < n; ++a) t = t * tiles[static_cast<size_t>(a)] + idx[static_cast<size_t>(a)] / side;
        mass[static_cast<size_t>(t)] += std::pow(std::abs(f[k]), p.q);
        members[static_cast<size_t>(t)].push_back(k);
    }
    const double vol = g.cell_volume();
    double r2 = 0;
    for (int a = 0; a < n; ++a) {
        const double half = 0.5 * side * g.spacing[a];
        r2 += half * half;
    }
    const double R = std::sqrt(r2);
    BlockDecomposition dec;
    for (i64 t = 0; t < ntiles; ++t) {
        if (members[static_cast<size_t>(t)].empty()) continue;
        Block b;
        b.radius = R;
        b.coefficient = std::pow(R, p.lambda / p.q_prime()) * std::pow(mass[static_cast<size_t>(t)] * vol, 1.0 / p.q);
        b.cells = members[static_cast<size_t>(t)];
        i64 rem = t;
        b.center.assign(static_cast<size_t>(n), 0.0);
        for (int a = n - 1; a >= 0; --a) {
            const int ti = static_cast<int>(rem % tiles[static_cast<size_t>(a)]);
            rem /= tiles[static_cast<size_t>(a)];
            b.center[static_cast<size_t>(a)] = g.origin[a] + (ti + 0.5) * side * g.spacing[a];
        }
        dec.blocks.push_back(std::move(b));
    }
    return dec;
}

}  // namespace detail

// Definitional upper bound (greedy tile decompositions over a dyadic side
// ladder, plus one enclosing ball) and a duality lower bound
// (|<f,g>| / ||g||_{M_{q',lambda}} over a small dual test set).
inline BlockNormBounds block_norm_bounds(const ScalarField& f, const MorreyParams& p) {
    const DomainSpec& d = *f.dom;
    BlockNormBounds out;
    bool all_zero = true;
    for (double v : f.values)
        if (v != 0.0) { all_zero = false; break; }
    if (all_zero) return out;

    int maxshape = 0;
    for (int a = 0; a < d.grid.n; ++a) maxshape = std::max(maxshape, d.grid.shape[a]);
    double best = -1.0;
    BlockDecomposition bestdec;
    for (int side = 1; side <= maxshape; side *= 2) {
        BlockDecomposition dec = detail::tile_decomposition(f, p, side);
        const double tot = dec.total();
        if (best < 0 || tot < best) { best = tot; bestdec = std::move(dec); }
    }
    {
        // one block on the circumball of the whole support
        std::vector<double> lo(static_cast<size_t>(d.grid.n), 1e300), hi(static_cast<size_t>(d.grid.n), -1e300);
        for (i64 k = 0; k < d.size(); ++k) {
            if (f[k] == 0.0) continue;
            const double* x = d.x(k);
            for (int a = 0; a < d.grid.n; ++a) {
                lo[static_cast<size_t>(a)] = std::min(lo[static_cast<size_t>(a)], x[a]);
                hi[static_cast<size_t>(a)] = std::max(hi[static_cast<size_t>(a)], x[a]);
            }
        }
        Block b;
        b.center.resize(static_cast<size_t>(d.grid.n));
        double r2 = 0;
        for (int a = 0; a < d.grid.n; ++a) {
            b.center[static_cast<size_t>(a)] = 0.5 * (lo[static_cast<size_t>(a)] + hi[static_cast<size_t>(a)]);
            const double half = 0.5 * (hi[static_cast<size_t>(a)] - lo[static_cast<size_t>(a)]) + 0.5 * d.grid.spacing[a];
            r2 += half * half;
        }
        b.radius = std::sqrt(r2);
        b.coefficient = std::pow(b.radius, p.lambda / p.q_prime()) * lq_norm(f, p.q);
        for (i64 k = 0; k < d.size(); ++k)
            if (f[k] != 0.0) b.cells.push_back(k);
        if (b.coefficient < best) {
            bestdec.blocks.assign(1, std::move(b));
            best = bestdec.total();
        }
    }
    out.upper = best;
    out.witness = std::move(bestdec);

    // duality lower bound against M_{q',lambda}
    const MorreyParams pc = p.conjugate();
    const BallSampler sampler = BallSampler::standard(d);
    const double vol = d.cell_volume();
    auto pair_with = [&](const ScalarField& g) {
        double num = 0;
        for (i64 k = 0; k < d.size(); ++k) num += f[k] * g[k];
        num = std::abs(num) * vol;
        if (num == 0.0) return 0.0;
        const double den = morrey_norm(g, pc, sampler);
        return den > 0 ? num / den : 0.0;
    };
    ScalarField ones(f.dom), sgn(f.dom);
    for (i64 k = 0; k < d.size(); ++k) {
        ones[k] = 1.0;
        sgn[k] = f[k] > 0 ? 1.0 : (f[k] < 0 ? -1.0 : 0.0);
    }
    out.lower = std::max({pair_with(f), pair_with(ones), pair_with(sgn)});
    for (int a = 0; a < d.grid.n; ++a) {
        ScalarField bump(f.dom);
        const double L = d.grid.extent(a);
        for (i64 k = 0; k < d.size(); ++k) {
            const double t = (d.x(k)[a] - d.grid.origin[a]) / L;
            bump[k] = std::sin(3.14159265358979323846 * t);
        }
        out.lower = std::max(out.lower, pair_with(bump));
    }
    out.lower = std::min(out.lower, out.upper);
    return out;
}

}  // namespace mzh
