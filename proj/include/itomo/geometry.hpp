#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "itomo/grid.hpp"

namespace itomo {

/// Parallel-beam acquisition on [-1,1]^2.
///
/// Detector m sits at s_m = (m - (n_det - 1) / 2) * det_pitch. Truncation keeps
/// the centered window of n_det_kept detectors, which defines the FOV radius
/// mu = (n_det_kept / 2) * det_pitch.
struct Geometry {
    int n_views{0};
    std::vector<double> angles;
    int n_det{0};
    double det_pitch{0.0};
    int n_det_kept{0};

    [[nodiscard]] double mu() const { return 0.5 * n_det_kept * det_pitch; }
    [[nodiscard]] double det_offset(int m) const { return (m - 0.5 * (n_det - 1)) * det_pitch; }
    [[nodiscard]] int kept_begin() const { return (n_det - n_det_kept) / 2; }
    [[nodiscard]] int kept_end() const { return kept_begin() + n_det_kept; }
    [[nodiscard]] bool is_truncating() const { return n_det_kept < n_det; }

    void validate() const {
        require(n_views >= 1, "geometry needs at least one view");
        require(static_cast<int>(angles.size()) == n_views, "angle count must equal n_views");
        require(n_det >= 2 && n_det % 2 == 0, "n_det must be even and positive");
        require(n_det_kept >= 2 && n_det_kept % 2 == 0, "n_det_kept must be even and positive");
        require(n_det_kept <= n_det, "n_det_kept must not exceed n_det");
        require(det_pitch > 0.0, "det_pitch must be positive");
        // Detector must span the square's diagonal; relative slack absorbs rounding of 2*sqrt(2)/n.
        require(det_pitch * n_det >= 2.0 * std::numbers::sqrt2 * (1.0 - 1e-12),
                "detector must cover [-1,1]^2 (det_pitch * n_det >= 2*sqrt(2))");
        require(mu() > 0.0, "mu must be positive");
    }

    /// Uniform views over [0, pi) with a detector spanning exactly the square's diagonal.
    static Geometry parallel(int n_views, int n_det, int n_det_kept) {
        return parallel(n_views, n_det, 2.0 * std::numbers::sqrt2 / n_det, n_det_kept);
    }

    static Geometry parallel(int n_views, int n_det, double det_pitch, int n_det_kept) {
        Geometry g;
        g.n_views = n_views;
        g.n_det = n_det;
        g.det_pitch = det_pitch;
        g.n_det_kept = n_det_kept;
        g.angles.resize(static_cast<std::size_t>(std::max(n_views, 0)));
        for (int k = 0; k < n_views; ++k) {
            g.angles[static_cast<std::size_t>(k)] = std::numbers::pi * k / n_views;
        }
        g.validate();
        return g;
    }

    /// Desk-scale default for an n x n image: the 256-pixel reference uses 360
    /// views, 368 detectors and a 176-detector window (the 736/350 ratio halved).
    static Geometry desk(int image_n) {
        require(image_n >= 8 && image_n % 16 == 0, "desk geometry needs image_n divisible by 16");
        const int n_views = image_n * 360 / 256;
        const int n_det = image_n * 368 / 256;
        const int n_kept = image_n * 176 / 256;
        return parallel(n_views, n_det, n_kept);
    }

    [[nodiscard]] Geometry untruncated() const {
        Geometry g = *this;
        g.n_det_kept = n_det;
        return g;
    }

    [[nodiscard]] Geometry with_views(int views) const {
        return parallel(views, n_det, det_pitch, n_det_kept);
    }

    friend bool operator==(const Geometry&, const Geometry&) = default;
};

/// Radon data y: n_views x n_det grid plus its acquisition geometry.
struct Sinogram {
    Grid2<double> data;
    Geometry geometry;
    bool truncated{false};

    static Sinogram zeros(const Geometry& g) {
        return Sinogram{Grid2<double>(g.n_views, g.n_det, 0.0), g, false};
    }
};

}  // namespace itomo
