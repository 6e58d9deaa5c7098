#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/SparseCore>

#include "itomo/geometry.hpp"
#include "itomo/grid.hpp"

namespace itomo {

namespace detail {

/// Ray samples along t are spaced half a pixel apart and span the square's
/// diagonal: t_q = (q - (n_t - 1) / 2) * dt.
struct RaySampling {
    double dt;
    int n_t;

    explicit RaySampling(int n) : dt(0.5 * pixel_size(n)) {
        n_t = static_cast<int>(std::ceil(2.0 * std::numbers::sqrt2 / dt)) + 1;
    }
    [[nodiscard]] double t(int q) const { return (q - 0.5 * (n_t - 1)) * dt; }
};

/// Clips the sample index range of one ray to the bilinear support of an n x n
/// grid. Samples outside contribute exactly zero, so clipping changes nothing.
inline void clip_ray(double sx, double sy, double dx, double dy, double half_extent, const RaySampling& rs,
                     int& q_lo, int& q_hi) {
    double t_lo = -std::numeric_limits<double>::infinity();
    double t_hi = std::numeric_limits<double>::infinity();
    auto slab = [&](double origin, double dir) {
        if (std::abs(dir) < 1e-15) {
            if (std::abs(origin) >= half_extent) {
                t_lo = 1.0;
                t_hi = -1.0;
            }
            return;
        }
        double a = (-half_extent - origin) / dir;
        double b = (half_extent - origin) / dir;
        if (a > b) {
            std::swap(a, b);
        }
        t_lo = std::max(t_lo, a);
        t_hi = std::min(t_hi, b);
    };
    slab(sx, dx);
    slab(sy, dy);
    if (t_lo > t_hi) {
        q_lo = 0;
        q_hi = -1;
        return;
    }
    const double center = 0.5 * (rs.n_t - 1);
    q_lo = std::max(0, static_cast<int>(std::floor(t_lo / rs.dt + center)) - 1);
    q_hi = std::min(rs.n_t - 1, static_cast<int>(std::ceil(t_hi / rs.dt + center)) + 1);
}

/// Image with a one-pixel zero border, so bilinear taps never need bounds checks.
struct PaddedGrid {
    int n;
    int stride;
    std::vector<double> data;

    explicit PaddedGrid(int n_) : n(n_), stride(n_ + 2), data(static_cast<std::size_t>(stride) * stride, 0.0) {}

    static PaddedGrid from(const Image& f) {
        PaddedGrid p(f.rows());
        for (int i = 0; i < p.n; ++i) {
            const auto src = f.row(i);
            std::copy(src.begin(), src.end(), p.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * p.stride + 1);
        }
        return p;
    }

    [[nodiscard]] Image interior() const {
        Image out = make_image(n);
        for (int i = 0; i < n; ++i) {
            const auto first = data.begin() + static_cast<std::ptrdiff_t>(i + 1) * stride + 1;
            std::copy(first, first + n, out.row(i).begin());
        }
        return out;
    }
};

/// Walks the samples of ray (k, m) and hands each one's four bilinear taps to
/// `visit(base, w00, w01, w10, w11)`, where base indexes the top-left tap in a
/// PaddedGrid (taps: base, base + 1, base + stride, base + stride + 1) and the
/// weights already include dt. Forward projection and its adjoint both use
/// this walker, so they are exact transposes.
template <typename Visit>
void walk_ray(int n, const Geometry& g, int k, int m, const RaySampling& rs, Visit&& visit) {
    const double h = pixel_size(n);
    const double phi = g.angles[static_cast<std::size_t>(k)];
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    const double offset = g.det_offset(m);
    // Point on the ray: offset * theta + t * theta_perp, theta_perp = (-sin, cos).
    const double sx = offset * c;
    const double sy = offset * s;
    const double dx = -s;
    const double dy = c;
    int q_lo = 0;
    int q_hi = -1;
    clip_ray(sx, sy, dx, dy, 1.0 + 0.5 * h, rs, q_lo, q_hi);
    if (q_lo > q_hi) {
        return;
    }
    // Padded continuous coordinates (pixel center j sits at j + 1).
    const double col_step = rs.dt * dx / h;
    const double row_step = rs.dt * dy / h;
    const double t0 = rs.t(0);
    const double col_origin = (sx + t0 * dx + 1.0) / h + 0.5;
    const double row_origin = (sy + t0 * dy + 1.0) / h + 0.5;
    const double limit = n + 1;
    const int stride = n + 2;
    const double dt = rs.dt;
    for (int q = q_lo; q <= q_hi; ++q) {
        const double col = col_origin + q * col_step;
        const double row = row_origin + q * row_step;
        if (!(col >= 0.0 && col < limit && row >= 0.0 && row < limit)) {
            continue;
        }
        const int c0 = static_cast<int>(col);
        const int r0 = static_cast<int>(row);
        const double fc = col - c0;
        const double fr = row - r0;
        const double top = (1.0 - fr) * dt;
        const double bottom = fr * dt;
        visit(r0 * stride + c0, top * (1.0 - fc), top * fc, bottom * (1.0 - fc), bottom * fc);
    }
}

}  // namespace detail

namespace detail {

/// Forward projection restricted to detector columns [m_lo, m_hi); the other
/// columns stay zero.
inline Sinogram radon_forward_columns(const Image& f, const Geometry& g, int m_lo, int m_hi) {
    g.validate();
    require(f.rows() == f.cols() && f.rows() >= 1, "radon_forward expects a square image");
    const int n = f.rows();
    const RaySampling rs(n);
    const PaddedGrid padded = PaddedGrid::from(f);
    const double* px = padded.data.data();
    const int stride = padded.stride;
    Sinogram out = Sinogram::zeros(g);
    for (int k = 0; k < g.n_views; ++k) {
        for (int m = m_lo; m < m_hi; ++m) {
            double acc = 0.0;
            walk_ray(n, g, k, m, rs, [&](int b, double w00, double w01, double w10, double w11) {
                acc += w00 * px[b] + w01 * px[b + 1] + w10 * px[b + stride] + w11 * px[b + stride + 1];
            });
            out.data(k, m) = acc;
        }
    }
    return out;
}

}  // namespace detail

/// Discrete parallel-beam Radon transform by bilinear ray sampling.
inline Sinogram radon_forward(const Image& f, const Geometry& g) {
    return detail::radon_forward_columns(f, g, 0, g.n_det);
}

/// Exact transpose of radon_forward (bilinear splatting), onto an n x n grid.
inline Image radon_adjoint(const Sinogram& y, int n) {
    const Geometry& g = y.geometry;
    g.validate();
    require(y.data.rows() == g.n_views && y.data.cols() == g.n_det, "sinogram shape does not match its geometry");
    const detail::RaySampling rs(n);
    detail::PaddedGrid padded(n);
    double* px = padded.data.data();
    const int stride = padded.stride;
    for (int k = 0; k < g.n_views; ++k) {
        for (int m = 0; m < g.n_det; ++m) {
            const double v = y.data(k, m);
            if (v == 0.0) {
                continue;
            }
            detail::walk_ray(n, g, k, m, rs, [&](int b, double w00, double w01, double w10, double w11) {
                px[b] += w00 * v;
                px[b + 1] += w01 * v;
                px[b + stride] += w10 * v;
                px[b + stride + 1] += w11 * v;
            });
        }
    }
    // Splats onto the zero border belong to no pixel and are dropped.
    return padded.interior();
}

/// Restriction to |s| < mu: zeroes every detector column outside the kept window.
/// Idempotent; applying it to truncated data is a no-op.
inline Sinogram truncate(const Sinogram& y) {
    const Geometry& g = y.geometry;
    Sinogram out = y;
    const int lo = g.kept_begin();
    const int hi = g.kept_end();
    for (int k = 0; k < g.n_views; ++k) {
        auto row = out.data.row(k);
        std::fill(row.begin(), row.begin() + lo, 0.0);
        std::fill(row.begin() + hi, row.end(), 0.0);
    }
    out.truncated = true;
    return out;
}

/// T_mu R f without computing the rays that truncation would discard.
inline Sinogram radon_forward_truncated(const Image& f, const Geometry& g) {
    Sinogram out = detail::radon_forward_columns(f, g, g.kept_begin(), g.kept_end());
    out.truncated = true;
    return out;
}

/// radon_forward (or radon_forward_truncated) stored as a CSR matrix, one row per
/// kept ray. Iterative solvers apply the operator hundreds of times; the matrix
/// form is several times faster than re-walking the rays. Forward and adjoint
/// use the same entries, so they stay exact transposes.
class SparseProjector {
public:
    SparseProjector(const Geometry& g, int n, bool truncated)
        : g_(g), n_(n), m_lo_(truncated ? g.kept_begin() : 0), m_hi_(truncated ? g.kept_end() : g.n_det),
          truncated_(truncated) {
        g.validate();
        require(n >= 1, "SparseProjector: image size must be >= 1");
        const detail::RaySampling rs(n);
        const int stride = n + 2;
        std::vector<double> scratch(static_cast<std::size_t>(stride) * stride, 0.0);
        std::vector<int> touched;
        outer_.reserve(static_cast<std::size_t>(rows()) + 1);
        outer_.push_back(0);
        auto add = [&](int b, double w) {
            if (scratch[static_cast<std::size_t>(b)] == 0.0) touched.push_back(b);
            scratch[static_cast<std::size_t>(b)] += w;
        };
        for (int k = 0; k < g.n_views; ++k) {
            for (int m = m_lo_; m < m_hi_; ++m) {
                touched.clear();
                detail::walk_ray(n, g, k, m, rs, [&](int b, double w00, double w01, double w10, double w11) {
                    add(b, w00);
                    add(b + 1, w01);
                    add(b + stride, w10);
                    add(b + stride + 1, w11);
                });
                std::sort(touched.begin(), touched.end());
                for (int b : touched) {
                    double& w = scratch[static_cast<std::size_t>(b)];
                    const int r = b / stride - 1;
                    const int c = b % stride - 1;
                    // Taps on the zero border belong to no pixel.
                    if (w != 0.0 && r >= 0 && r < n && c >= 0 && c < n) {
                        inner_.push_back(r * n + c);
                        values_.push_back(w);
                    }
                    w = 0.0;
                }
                outer_.push_back(static_cast<int>(inner_.size()));
            }
        }
    }

    /// Rough entry count of the matrix for (g, n), to decide whether caching pays.
    static double estimated_entries(const Geometry& g, int n, bool truncated) {
        const int cols = truncated ? g.n_det_kept : g.n_det;
        return 3.0 * n * static_cast<double>(g.n_views) * cols;
    }

    [[nodiscard]] Sinogram forward(const Image& f) const {
        require(f.rows() == n_ && f.cols() == n_, "SparseProjector: image size mismatch");
        Eigen::Map<const Eigen::VectorXd> x(f.values().data(), static_cast<Eigen::Index>(f.size()));
        const Eigen::VectorXd y = matrix() * x;
        Sinogram out = Sinogram::zeros(g_);
        const int width = m_hi_ - m_lo_;
        for (int k = 0; k < g_.n_views; ++k) {
            for (int m = m_lo_; m < m_hi_; ++m) out.data(k, m) = y[static_cast<Eigen::Index>(k) * width + (m - m_lo_)];
        }
        out.truncated = truncated_;
        return out;
    }

    /// Adjoint of forward; columns outside the kept window are ignored.
    [[nodiscard]] Image adjoint(const Sinogram& y) const {
        require(y.data.rows() == g_.n_views && y.data.cols() == g_.n_det, "SparseProjector: sinogram shape mismatch");
        const int width = m_hi_ - m_lo_;
        Eigen::VectorXd v(static_cast<Eigen::Index>(rows()));
        for (int k = 0; k < g_.n_views; ++k) {
            for (int m = m_lo_; m < m_hi_; ++m) v[static_cast<Eigen::Index>(k) * width + (m - m_lo_)] = y.data(k, m);
        }
        Image out = make_image(n_);
        Eigen::Map<Eigen::VectorXd> x(out.values().data(), static_cast<Eigen::Index>(out.size()));
        x.noalias() = matrix().transpose() * v;
        return out;
    }

    [[nodiscard]] std::size_t entries() const { return values_.size(); }

private:
    using Csr = Eigen::Map<const Eigen::SparseMatrix<double, Eigen::RowMajor, int>>;

    [[nodiscard]] int rows() const { return g_.n_views * (m_hi_ - m_lo_); }

    [[nodiscard]] Csr matrix() const {
        return Csr(rows(), n_ * n_, static_cast<Eigen::Index>(values_.size()), outer_.data(), inner_.data(),
                   values_.data());
    }

    Geometry g_;
    int n_;
    int m_lo_;
    int m_hi_;
    bool truncated_;
    std::vector<int> outer_;
    std::vector<int> inner_;
    std::vector<double> values_;
};

}  // namespace itomo
