#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "itomo/geometry.hpp"
#include "itomo/grid.hpp"
#include "itomo/pcg32.hpp"
#include "itomo/projector.hpp"

namespace itomo {

struct TvConfig {
    double lambda{1e-3};
    double epsilon{1e-2};
    int max_iters{300};
    double step{0.0};  // <= 0 selects the automatic 0.9 / L step
    double tol{1e-7};
    int power_iters{20};

    void validate() const {
        require(lambda > 0.0, "tv: lambda must be positive");
        require(epsilon > 0.0, "tv: epsilon must be positive");
        require(max_iters >= 1, "tv: max_iters must be >= 1");
        require(tol > 0.0, "tv: tol must be positive");
        require(power_iters >= 1, "tv: power_iters must be >= 1");
    }
};

/// Raised when the objective increases for five consecutive iterations.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Smoothed isotropic TV: sum sqrt(dx^2 + dy^2 + eps^2) - eps * n^2, forward
/// differences with replicate boundary (the last difference in each direction is 0).
inline double tv_value(const Image& f, double epsilon) {
    require(epsilon >= 0.0, "tv: epsilon must be non-negative");
    const int rows = f.rows();
    const int cols = f.cols();
    const double eps2 = epsilon * epsilon;
    double acc = 0.0;
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            const double dx = j + 1 < cols ? f(i, j + 1) - f(i, j) : 0.0;
            const double dy = i + 1 < rows ? f(i + 1, j) - f(i, j) : 0.0;
            acc += std::sqrt(dx * dx + dy * dy + eps2) - epsilon;
        }
    }
    return acc;
}

/// Exact gradient of tv_value.
inline Image tv_gradient(const Image& f, double epsilon) {
    require(epsilon > 0.0, "tv_gradient needs epsilon > 0");
    const int rows = f.rows();
    const int cols = f.cols();
    const double eps2 = epsilon * epsilon;
    Image grad(rows, cols, 0.0);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            const double dx = j + 1 < cols ? f(i, j + 1) - f(i, j) : 0.0;
            const double dy = i + 1 < rows ? f(i + 1, j) - f(i, j) : 0.0;
            const double inv = 1.0 / std::sqrt(dx * dx + dy * dy + eps2);
            const double px = dx * inv;
            const double py = dy * inv;
            if (j + 1 < cols) {
                grad(i, j + 1) += px;
                grad(i, j) -= px;
            }
            if (i + 1 < rows) {
                grad(i + 1, j) += py;
                grad(i, j) -= py;
            }
        }
    }
    return grad;
}

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double half_residual_norm2(const Sinogram& ax, const Sinogram& y) {
    double acc = 0.0;
    const auto a = ax.data.values();
    const auto b = y.data.values();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return 0.5 * acc;
}

/// The measurement operator A: radon_forward, followed by truncation when the
/// data is truncated. Uses the cached sparse matrix unless it would be too large.
class Measurement {
public:
    static constexpr double kMaxCachedEntries = 3e7;

    Measurement(const Geometry& g, bool truncated, int n) : g_(g), truncated_(truncated), n_(n) {
        if (SparseProjector::estimated_entries(g, n, truncated) <= kMaxCachedEntries) {
            sparse_.emplace(g, n, truncated);
        }
    }

    [[nodiscard]] Sinogram apply(const Image& f) const {
        if (sparse_) return sparse_->forward(f);
        return truncated_ ? radon_forward_truncated(f, g_) : radon_forward(f, g_);
    }

    /// Truncation is a diagonal projection, hence self-adjoint.
    [[nodiscard]] Image adjoint(const Sinogram& r) const {
        if (sparse_) return sparse_->adjoint(r);
        return radon_adjoint(truncated_ ? truncate(r) : r, n_);
    }

private:
    Geometry g_;
    bool truncated_;
    int n_;
    std::optional<SparseProjector> sparse_;
};

inline double operator_norm2(const Measurement& a, int n, int iters, std::uint64_t seed) {
    Pcg32 rng(seed);
    Image x = make_image(n);
    for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        const double norm = std::sqrt(dot(x.values(), x.values()));
        for (double& v : x.values()) v /= norm;
        Image next = a.adjoint(a.apply(x));
        lambda = dot(x.values(), next.values());
        x = std::move(next);
    }
    return lambda;
}

}  // namespace detail

/// Largest eigenvalue of A^T A by power iteration from a seeded random start.
inline double estimate_operator_norm2(const Geometry& g, bool truncated, int n, int iters, std::uint64_t seed = 7) {
    return detail::operator_norm2(detail::Measurement(g, truncated, n), n, iters, seed);
}

struct TvResult {
    Image image;
    std::vector<double> objective;  // objective[0] is the initial value
    int iterations{0};
    double step{0.0};
    double lipschitz{0.0};
};

/// Minimizes 1/2 ||A f - y||^2 + lambda TV_eps(f) by gradient descent from f = 0,
/// where A is the (truncated, if y is) projector. Reconstructs the full grid.
inline TvResult tv_reconstruct_detailed(const Sinogram& y, const TvConfig& cfg, int n,
                                        const std::function<void(int, double)>& on_iter = {}) {
    cfg.validate();
    const Geometry& g = y.geometry;
    g.validate();
    const bool truncated = y.truncated;

    TvResult res;
    const detail::Measurement a(g, truncated, n);
    const double a_norm2 = detail::operator_norm2(a, n, cfg.power_iters, 7);
    res.lipschitz = a_norm2 + cfg.lambda * 8.0 / cfg.epsilon;
    res.step = cfg.step > 0.0 ? cfg.step : 0.9 / res.lipschitz;

    Image f = make_image(n);
    auto objective_at = [&](const Image& img, Sinogram& ax) {
        ax = a.apply(img);
        return detail::half_residual_norm2(ax, y) + cfg.lambda * tv_value(img, cfg.epsilon);
    };
    Sinogram ax;
    double obj = objective_at(f, ax);
    res.objective.push_back(obj);
    if (on_iter) on_iter(0, obj);

    int increases = 0;
    for (int it = 1; it <= cfg.max_iters; ++it) {
        Sinogram resid = ax;
        auto rv = resid.data.values();
        const auto yv = y.data.values();
        for (std::size_t i = 0; i < rv.size(); ++i) rv[i] -= yv[i];
        const Image data_grad = a.adjoint(resid);
        const Image reg_grad = tv_gradient(f, cfg.epsilon);
        auto fv = f.values();
        for (std::size_t i = 0; i < fv.size(); ++i) {
            fv[i] -= res.step * (data_grad.values()[i] + cfg.lambda * reg_grad.values()[i]);
        }
        const double next = objective_at(f, ax);
        res.objective.push_back(next);
        res.iterations = it;
        if (on_iter) on_iter(it, next);
        if (!std::isfinite(next)) {
            throw DivergenceError("tv_reconstruct: objective became non-finite at iteration " + std::to_string(it));
        }
        increases = next > obj ? increases + 1 : 0;
        if (increases >= 5) {
            throw DivergenceError("tv_reconstruct: objective increased 5 consecutive iterations");
        }
        const double rel = (obj - next) / std::max(std::abs(obj), std::numeric_limits<double>::min());
        obj = next;
        if (rel >= 0.0 && rel < cfg.tol) {
            break;
        }
    }
    res.image = std::move(f);
    return res;
}

inline Image tv_reconstruct(const Sinogram& y, const TvConfig& cfg, int n) {
    return tv_reconstruct_detailed(y, cfg, n).image;
}

inline void write_objective_csv(std::ostream& os, const std::vector<double>& objective) {
    os << "iteration,objective\n";
    for (std::size_t i = 0; i < objective.size(); ++i) {
        os << i << ',' << objective[i] << '\n';
    }
}

}  // namespace itomo
