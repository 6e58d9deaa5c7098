#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <nlohmann/json.hpp>

#include "itomo/geometry.hpp"
#include "itomo/grid.hpp"
#include "itomo/pcg32.hpp"

namespace itomo {

struct Ellipse {
    double cx{0.0};
    double cy{0.0};
    double a{1.0};
    double b{1.0};
    double angle{0.0};
    double density{0.0};

    /// Strict interior test in the ellipse's rotated, centered frame.
    [[nodiscard]] bool contains(double x, double y) const {
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double dx = x - cx;
        const double dy = y - cy;
        const double u = (dx * c + dy * s) / a;
        const double v = (-dx * s + dy * c) / b;
        return u * u + v * v < 1.0;
    }

    /// Closed-form line integral over {x : x . theta = s}, theta = (cos phi, sin phi).
    [[nodiscard]] double line_integral(double phi, double s) const {
        const double shifted = s - (cx * std::cos(phi) + cy * std::sin(phi));
        const double rel = phi - angle;
        const double cr = std::cos(rel);
        const double sr = std::sin(rel);
        const double a2 = a * a * cr * cr + b * b * sr * sr;
        const double gap = a2 - shifted * shifted;
        if (gap <= 0.0) {
            return 0.0;
        }
        return 2.0 * a * b * density * std::sqrt(gap) / a2;
    }

    [[nodiscard]] bool inside_unit_disk() const {
        return std::hypot(cx, cy) + std::max(a, b) <= 1.0 + 1e-12;
    }

    friend bool operator==(const Ellipse&, const Ellipse&) = default;
};

struct Phantom {
    std::vector<Ellipse> ellipses;
    std::uint64_t seed{0};

    [[nodiscard]] Phantom scaled(double factor) const {
        Phantom out = *this;
        for (auto& e : out.ellipses) {
            e.density *= factor;
        }
        return out;
    }

    friend bool operator==(const Phantom&, const Phantom&) = default;
};

/// Modified (Toft) Shepp-Logan head. Its rasterization already spans [0, 1]:
/// skull 1.0, brain 0.2, features up to 0.4.
inline Phantom make_shepp_logan() {
    constexpr double deg = std::numbers::pi / 180.0;
    // {density, a, b, cx, cy, angle_deg}
    constexpr std::array<std::array<double, 6>, 10> table{{
        {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
        {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
        {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
        {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
        {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
        {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
        {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
        {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
    }};
    Phantom p;
    for (const auto& row : table) {
        p.ellipses.push_back(Ellipse{row[3], row[4], row[1], row[2], row[5] * deg, row[0]});
    }
    return p;
}

/// Random piecewise-constant phantom.
///
/// Ellipse 0 is a large body (density 0.2-0.4) that always extends past the
/// default FOV. The other ellipses (density +/-0.05-0.3) are placed inside the
/// body's inscribed disk without overlapping one another (bounding circles),
/// and negative features are capped at the body density, so every pixel lies
/// in [0, body + max positive feature]. Densities are finally divided by that
/// bound: rasterizations span [0, 1] without clamping.
inline Phantom make_random_phantom(std::uint64_t seed, int n_ellipses) {
    require(n_ellipses >= 1 && n_ellipses <= 32, "n_ellipses must be in [1, 32]");
    Pcg32 rng(seed);
    Phantom p;
    p.seed = seed;

    Ellipse body;
    body.a = rng.uniform(0.78, 0.94);
    body.b = rng.uniform(0.78, 0.94);
    body.angle = rng.uniform(0.0, std::numbers::pi);
    const double slack = 0.98 - std::max(body.a, body.b);
    const double r0 = rng.uniform(0.0, std::max(slack, 0.0));
    const double t0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    body.cx = r0 * std::cos(t0);
    body.cy = r0 * std::sin(t0);
    body.density = rng.uniform(0.2, 0.4);
    p.ellipses.push_back(body);

    const double inner_radius = std::min(body.a, body.b);
    constexpr int kAttempts = 200;
    double max_size = 0.3;
    for (int i = 1; i < n_ellipses; ++i) {
        Ellipse e;
        bool placed = false;
        while (!placed) {
            for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
                e.a = rng.uniform(0.04, max_size);
                e.b = rng.uniform(0.04, max_size);
                e.angle = rng.uniform(0.0, std::numbers::pi);
                const double extent = std::max(e.a, e.b);
                const double reach = inner_radius - extent;
                const double r = reach * std::sqrt(rng.uniform());
                const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
                e.cx = body.cx + r * std::cos(t);
                e.cy = body.cy + r * std::sin(t);
                placed = true;
                for (std::size_t k = 1; k < p.ellipses.size(); ++k) {
                    const auto& o = p.ellipses[k];
                    if (std::hypot(e.cx - o.cx, e.cy - o.cy) < extent + std::max(o.a, o.b)) {
                        placed = false;
                        break;
                    }
                }
            }
            if (!placed) {
                // Crowded body: retry with smaller features.
                max_size = std::max(0.05, 0.7 * max_size);
            }
        }
        const double magnitude = rng.uniform(0.05, 0.3);
        const bool negative = rng.uniform() < 0.4;
        e.density = negative ? -std::min(magnitude, body.density) : magnitude;
        p.ellipses.push_back(e);
    }

    double max_positive = 0.0;
    for (std::size_t i = 1; i < p.ellipses.size(); ++i) {
        max_positive = std::max(max_positive, p.ellipses[i].density);
    }
    const double upper = body.density + max_positive;
    for (auto& e : p.ellipses) {
        e.density /= upper;
    }
    return p;
}

/// Point-sampled rasterization: each pixel takes the summed density of every
/// ellipse whose interior contains its center.
inline Image rasterize(const Phantom& p, int n) {
    require(n >= 8, "rasterize needs n >= 8");
    Image img = make_image(n);
    for (int i = 0; i < n; ++i) {
        const double y = pixel_center(i, n);
        for (int j = 0; j < n; ++j) {
            const double x = pixel_center(j, n);
            // Signs summed separately so a feature cancelling its host
            // exactly gives 0 rather than a rounding residue below it.
            double pos = 0.0;
            double neg = 0.0;
            for (const auto& e : p.ellipses) {
                if (e.contains(x, y)) {
                    (e.density >= 0.0 ? pos : neg) += e.density;
                }
            }
            img(i, j) = pos + neg;
        }
    }
    return img;
}

inline Sinogram analytic_sinogram(const Phantom& p, const Geometry& g) {
    g.validate();
    Sinogram out = Sinogram::zeros(g);
    for (int k = 0; k < g.n_views; ++k) {
        const double phi = g.angles[static_cast<std::size_t>(k)];
        for (int m = 0; m < g.n_det; ++m) {
            const double s = g.det_offset(m);
            double v = 0.0;
            for (const auto& e : p.ellipses) {
                v += e.line_integral(phi, s);
            }
            out.data(k, m) = v;
        }
    }
    return out;
}

inline void to_json(nlohmann::json& j, const Ellipse& e) {
    j = nlohmann::json{{"cx", e.cx}, {"cy", e.cy}, {"a", e.a}, {"b", e.b}, {"angle", e.angle}, {"density", e.density}};
}

inline void from_json(const nlohmann::json& j, Ellipse& e) {
    j.at("cx").get_to(e.cx);
    j.at("cy").get_to(e.cy);
    j.at("a").get_to(e.a);
    j.at("b").get_to(e.b);
    j.at("angle").get_to(e.angle);
    j.at("density").get_to(e.density);
    require(e.a > 0.0 && e.b > 0.0, "ellipse semi-axes must be positive");
}

inline void to_json(nlohmann::json& j, const Phantom& p) {
    j = nlohmann::json{{"seed", p.seed}, {"ellipses", p.ellipses}};
}

inline void from_json(const nlohmann::json& j, Phantom& p) {
    p.seed = j.value("seed", std::uint64_t{0});
    j.at("ellipses").get_to(p.ellipses);
}

}  // namespace itomo
