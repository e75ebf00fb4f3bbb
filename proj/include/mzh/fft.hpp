#pragma once

#include <complex>
#include <functional>
#include <mutex>

#include <fftw3.h>

#include "mzh/grid.hpp"

namespace mzh {

namespace detail {

// FFTW plan creation is not thread-safe; execution of distinct plans is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex mu;
    return mu;
}

inline i64 real_count(const std::vector<int>& shape) {
    i64 c = 1;
    for (int s : shape) c *= s;
    return c;
}

inline i64 complex_count(const std::vector<int>& shape) {
    i64 c = 1;
    for (size_t d = 0; d + 1 < shape.size(); ++d) c *= shape[d];
    return c * (shape.back() / 2 + 1);
}

}  // namespace detail

// Out-of-place r2c / c2r transforms with FFTW_ESTIMATE plans. Buffers are
// fftw-aligned copies, so plan selection (hence rounding) is reproducible.
struct Spectral {
    static std::vector<std::complex<double>> forward(const std::vector<int>& shape,
                                                     const std::vector<double>& in) {
        const i64 nr = detail::real_count(shape);
        const i64 nc = detail::complex_count(shape);
        if (static_cast<i64>(in.size()) != nr) throw std::invalid_argument("fft forward: size mismatch");
        double* rbuf = fftw_alloc_real(static_cast<size_t>(nr));
        fftw_complex* cbuf = fftw_alloc_complex(static_cast<size_t>(nc));
        fftw_plan plan;
        {
            std::lock_guard<std::mutex> g(detail::fftw_planner_mutex());
            plan = fftw_plan_dft_r2c(static_cast<int>(shape.size()), shape.data(), rbuf, cbuf,
                                     FFTW_ESTIMATE);
        }
        std::copy(in.begin(), in.end(), rbuf);
        fftw_execute(plan);
        std::vector<std::complex<double>> out(static_cast<size_t>(nc));
        for (i64 k = 0; k < nc; ++k) out[static_cast<size_t>(k)] = {cbuf[k][0], cbuf[k][1]};
        {
            std::lock_guard<std::mutex> g(detail::fftw_planner_mutex());
            fftw_destroy_plan(plan);
        }
        fftw_free(rbuf);
        fftw_free(cbuf);
        return out;
    }

    // Includes the 1/cell_count normalization, so inverse(forward(x)) == x.
    static std::vector<double> inverse(const std::vector<int>& shape,
                                       const std::vector<std::complex<double>>& in) {
        const i64 nr = detail::real_count(shape);
        const i64 nc = detail::complex_count(shape);
        if (static_cast<i64>(in.size()) != nc) throw std::invalid_argument("fft inverse: size mismatch");
        double* rbuf = fftw_alloc_real(static_cast<size_t>(nr));
        fftw_complex* cbuf = fftw_alloc_complex(static_cast<size_t>(nc));
        fftw_plan plan;
        {
            std::lock_guard<std::mutex> g(detail::fftw_planner_mutex());
            plan = fftw_plan_dft_c2r(static_cast<int>(shape.size()), shape.data(), cbuf, rbuf,
                                     FFTW_ESTIMATE);
        }
        for (i64 k = 0; k < nc; ++k) {
            cbuf[k][0] = in[static_cast<size_t>(k)].real();
            cbuf[k][1] = in[static_cast<size_t>(k)].imag();
        }
        fftw_execute(plan);
        std::vector<double> out(static_cast<size_t>(nr));
        const double scale = 1.0 / static_cast<double>(nr);
        for (i64 k = 0; k < nr; ++k) out[static_cast<size_t>(k)] = rbuf[k] * scale;
        {
            std::lock_guard<std::mutex> g(detail::fftw_planner_mutex());
            fftw_destroy_plan(plan);
        }
        fftw_free(rbuf);
        fftw_free(cbuf);
        return out;
    }

    // Signed integer frequency vector of a complex-layout entry.
    static void frequency(const std::vector<int>& shape, i64 flat_c, int* k) {
        const int n = static_cast<int>(shape.size());
        const int last = shape[static_cast<size_t>(n - 1)] / 2 + 1;
        k[n - 1] = static_cast<int>(flat_c % last);
        flat_c /= last;
        for (int d = n - 2; d >= 0; --d) {
            int i = static_cast<int>(flat_c % shape[static_cast<size_t>(d)]);
            flat_c /= shape[static_cast<size_t>(d)];
            k[d] = i <= shape[static_cast<size_t>(d)] / 2 ? i : i - shape[static_cast<size_t>(d)];
        }
    }
};

// Linear (non-circular) convolution of a dense box signal with a kernel given
// on lattice offsets, via zero padding to P >= N + maxoff per axis:
//   out[i] = sum_j K(i - j) g[j],  offsets clamped to [-maxoff, maxoff].
// The forward transform of the signal is cached so several kernels can be
// applied to one signal (radius ladders, component loops).
class PaddedConv {
  public:
    PaddedConv(std::vector<int> shape, std::vector<int> maxoff)
        : shape_(std::move(shape)), maxoff_(std::move(maxoff)) {
        if (shape_.size() != maxoff_.size()) throw std::invalid_argument("conv: rank mismatch");
        padded_.resize(shape_.size());
        for (size_t d = 0; d < shape_.size(); ++d) {
            int need = shape_[d] + maxoff_[d];
            padded_[d] = ((need + 7) / 8) * 8;
        }
    }

    PaddedConv(const std::vector<int>& shape, int maxoff)
        : PaddedConv(shape, std::vector<int>(shape.size(), maxoff)) {}

    const std::vector<int>& padded_shape() const { return padded_; }

    void load_signal(const std::vector<double>& dense) {
        if (static_cast<i64>(dense.size()) != detail::real_count(shape_))
            throw std::invalid_argument("conv: signal size mismatch");
        std::vector<double> pad(static_cast<size_t>(detail::real_count(padded_)), 0.0);
        scatter(dense, pad);
        sig_hat_ = Spectral::forward(padded_, pad);
    }

    // kernel(offset) with offset[d] in [-maxoff_d, +maxoff_d].
    std::vector<double> apply(const std::function<double(const int*)>& kernel) const {
        return apply_hat(kernel_hat(kernel));
    }

    std::vector<std::complex<double>> kernel_hat(
        const std::function<double(const int*)>& kernel) const {
        const int n = static_cast<int>(shape_.size());
        std::vector<double> pad(static_cast<size_t>(detail::real_count(padded_)), 0.0);
        std::vector<int> off(static_cast<size_t>(n), -maxoff_[0]);
        for (int d = 0; d < n; ++d) off[static_cast<size_t>(d)] = -maxoff_[static_cast<size_t>(d)];
        while (true) {
            i64 idx = 0;
            for (int d = 0; d < n; ++d) {
                int o = off[static_cast<size_t>(d)];
                int p = o >= 0 ? o : o + padded_[static_cast<size_t>(d)];
                idx = idx * padded_[static_cast<size_t>(d)] + p;
            }
            pad[static_cast<size_t>(idx)] = kernel(off.data());
            int d = n - 1;
            while (d >= 0) {
                if (++off[static_cast<size_t>(d)] <= maxoff_[static_cast<size_t>(d)]) break;
                off[static_cast<size_t>(d)] = -maxoff_[static_cast<size_t>(d)];
                --d;
            }
            if (d < 0) break;
        }
        return Spectral::forward(padded_, pad);
    }

    std::vector<double> apply_hat(const std::vector<std::complex<double>>& khat) const {
        if (sig_hat_.empty()) throw std::runtime_error("conv: no signal loaded");
        std::vector<std::complex<double>> prod(sig_hat_.size());
        for (size_t k = 0; k < prod.size(); ++k) prod[k] = sig_hat_[k] * khat[k];
        std::vector<double> pad = Spectral::inverse(padded_, prod);
        std::vector<double> out(static_cast<size_t>(detail::real_count(shape_)));
        gather(pad, out);
        return out;
    }

  private:
    void scatter(const std::vector<double>& src, std::vector<double>& pad) const {
        const int n = static_cast<int>(shape_.size());
        std::vector<int> idx(static_cast<size_t>(n), 0);
        for (i64 f = 0; f < static_cast<i64>(src.size()); ++f) {
            i64 rem = f, pidx = 0;
            for (int d = n - 1; d >= 0; --d) {
                idx[static_cast<size_t>(d)] = static_cast<int>(rem % shape_[static_cast<size_t>(d)]);
                rem /= shape_[static_cast<size_t>(d)];
            }
            for (int d = 0; d < n; ++d) pidx = pidx * padded_[static_cast<size_t>(d)] + idx[static_cast<size_t>(d)];
            pad[static_cast<size_t>(pidx)] = src[static_cast<size_t>(f)];
        }
    }

    void gather(const std::vector<double>& pad, std::vector<double>& dst) const {
        const int n = static_cast<int>(shape_.size());
        std::vector<int> idx(static_cast<size_t>(n), 0);
        for (i64 f = 0; f < static_cast<i64>(dst.size()); ++f) {
            i64 rem = f, pidx = 0;
            for (int d = n - 1; d >= 0; --d) {
                idx[static_cast<size_t>(d)] = static_cast<int>(rem % shape_[static_cast<size_t>(d)]);
                rem /= shape_[static_cast<size_t>(d)];
            }
            for (int d = 0; d < n; ++d) pidx = pidx * padded_[static_cast<size_t>(d)] + idx[static_cast<size_t>(d)];
            dst[static_cast<size_t>(f)] = pad[static_cast<size_t>(pidx)];
        }
    }

    std::vector<int> shape_;
    std::vector<int> maxoff_;
    std::vector<int> padded_;
    std::vector<std::complex<double>> sig_hat_;
};

// Flip a dense box array along one axis (index i -> shape-1-i).
inline std::vector<double> flip_axis(const std::vector<int>& shape, const std::vector<double>& a,
                                     int axis) {
    const int n = static_cast<int>(shape.size());
    std::vector<double> out(a.size());
    std::vector<int> idx(static_cast<size_t>(n));
    for (i64 f = 0; f < static_cast<i64>(a.size()); ++f) {
        i64 rem = f;
        for (int d = n - 1; d >= 0; --d) {
            idx[static_cast<size_t>(d)] = static_cast<int>(rem % shape[static_cast<size_t>(d)]);
            rem /= shape[static_cast<size_t>(d)];
        }
        idx[static_cast<size_t>(axis)] = shape[static_cast<size_t>(axis)] - 1 - idx[static_cast<size_t>(axis)];
        i64 g = 0;
        for (int d = 0; d < n; ++d) g = g * shape[static_cast<size_t>(d)] + idx[static_cast<size_t>(d)];
        out[static_cast<size_t>(g)] = a[static_cast<size_t>(f)];
    }
    return out;
}

}  // namespace mzh
