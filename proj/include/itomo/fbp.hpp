#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "itomo/geometry.hpp"
#include "itomo/grid.hpp"

namespace itomo {

enum class FilterKind { RamLak, Hann };

inline std::string to_string(FilterKind kind) { return kind == FilterKind::RamLak ? "ram-lak" : "hann-windowed"; }

inline FilterKind filter_kind_from_string(const std::string& s) {
    if (s == "ram-lak") return FilterKind::RamLak;
    if (s == "hann-windowed" || s == "hann") return FilterKind::Hann;
    throw InvalidArgument("unknown filter kind: " + s);
}

inline int next_pow2(int v) {
    int p = 1;
    while (p < v) p <<= 1;
    return p;
}

struct FilterSpec {
    FilterKind kind{FilterKind::RamLak};
    int padded_len{0};

    /// Smallest power-of-two padding that makes the FFT convolution linear.
    static FilterSpec for_detectors(int n_det, FilterKind kind = FilterKind::RamLak) {
        return FilterSpec{kind, next_pow2(2 * n_det)};
    }

    void validate(int n_det) const {
        require(padded_len >= 2 * n_det, "padded_len must be >= 2 * n_det");
        require(padded_len > 0 && (padded_len & (padded_len - 1)) == 0, "padded_len must be a power of two");
    }
};

/// Band-limited ramp taps at lag n: 1/(4 ds^2) at 0, -1/(pi n ds)^2 for odd n, 0 otherwise.
inline double ramp_tap(int lag, double ds) {
    if (lag == 0) return 1.0 / (4.0 * ds * ds);
    if (lag % 2 == 0) return 0.0;
    const double d = std::numbers::pi * lag * ds;
    return -1.0 / (d * d);
}

/// Frequency response of the (optionally Hann-apodized) kernel on a circular
/// grid of padded_len samples. The kernel is even, so the response is real.
inline std::vector<double> ramp_response(const FilterSpec& spec, double ds) {
    const int len = spec.padded_len;
    std::vector<double> taps(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
        const int lag = i < len / 2 ? i : i - len;
        taps[static_cast<std::size_t>(i)] = ramp_tap(lag, ds);
    }
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spectrum;
    fft.fwd(spectrum, taps);
    std::vector<double> response(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
        double r = spectrum[static_cast<std::size_t>(i)].real();
        if (spec.kind == FilterKind::Hann) {
            const int k = i < len / 2 ? i : i - len;
            r *= 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * k / len));
        }
        response[static_cast<std::size_t>(i)] = r;
    }
    return response;
}

/// Convolves each view row with the ramp kernel (no ds factor) by zero-padded FFT.
inline Sinogram ramp_filter_rows(const Sinogram& y, const FilterSpec& spec) {
    const Geometry& g = y.geometry;
    spec.validate(g.n_det);
    const auto response = ramp_response(spec, g.det_pitch);
    const int len = spec.padded_len;
    Eigen::FFT<double> fft;
    std::vector<double> padded(static_cast<std::size_t>(len));
    std::vector<std::complex<double>> spectrum;
    std::vector<double> filtered;
    Sinogram out = y;
    for (int k = 0; k < g.n_views; ++k) {
        std::fill(padded.begin(), padded.end(), 0.0);
        const auto row = y.data.row(k);
        std::copy(row.begin(), row.end(), padded.begin());
        fft.fwd(spectrum, padded);
        for (int i = 0; i < len; ++i) {
            spectrum[static_cast<std::size_t>(i)] *= response[static_cast<std::size_t>(i)];
        }
        fft.inv(filtered, spectrum);
        auto dst = out.data.row(k);
        std::copy(filtered.begin(), filtered.begin() + g.n_det, dst.begin());
    }
    return out;
}

/// Backprojects already-filtered rows with linear detector interpolation and
/// the (pi / n_views) * ds quadrature weight.
inline Image backproject_filtered(const Sinogram& filtered, int n) {
    const Geometry& g = filtered.geometry;
    require(n >= 1, "image size must be positive");
    Image out = make_image(n);
    const double h = pixel_size(n);
    const double center = 0.5 * (g.n_det - 1);
    for (int k = 0; k < g.n_views; ++k) {
        const double phi = g.angles[static_cast<std::size_t>(k)];
        const double c = std::cos(phi) / g.det_pitch;
        const double s = std::sin(phi) / g.det_pitch;
        const auto row = filtered.data.row(k);
        for (int i = 0; i < n; ++i) {
            const double y = pixel_center(i, n);
            const double base = y * s + center;
            for (int j = 0; j < n; ++j) {
                const double x = -1.0 + (j + 0.5) * h;
                const double u = x * c + base;
                const double u0f = std::floor(u);
                const int u0 = static_cast<int>(u0f);
                if (u0 < -1 || u0 >= g.n_det) {
                    continue;
                }
                const double fu = u - u0f;
                double v = 0.0;
                if (u0 >= 0) v += (1.0 - fu) * row[static_cast<std::size_t>(u0)];
                if (u0 + 1 < g.n_det) v += fu * row[static_cast<std::size_t>(u0 + 1)];
                out(i, j) += v;
            }
        }
    }
    const double scale = std::numbers::pi / g.n_views * g.det_pitch;
    for (double& v : out.values()) {
        v *= scale;
    }
    return out;
}

/// Filtered backprojection, the right inverse M. Truncated input is used as-is.
inline Image fbp_reconstruct(const Sinogram& y, const FilterSpec& spec, int n) {
    y.geometry.validate();
    return backproject_filtered(ramp_filter_rows(y, spec), n);
}

inline Image fbp_reconstruct(const Sinogram& y, int n) {
    return fbp_reconstruct(y, FilterSpec::for_detectors(y.geometry.n_det), n);
}

/// Half-cosine taper value j samples past the window edge (j = 1..width).
inline double cosine_taper(int j, int width) {
    if (j > width) return 0.0;
    return 0.5 * (1.0 + std::cos(std::numbers::pi * j / width));
}

/// Sinogram extrapolation baseline: outside the kept window each row continues
/// at its edge value, decaying to zero over taper_width samples.
inline Sinogram extrapolate_sinogram(const Sinogram& y, int taper_width) {
    const Geometry& g = y.geometry;
    require(y.truncated, "extrapolate_sinogram expects a truncated sinogram");
    require(taper_width >= 1, "taper_width must be >= 1");
    const int lo = g.kept_begin();
    const int hi = g.kept_end();
    require(taper_width <= lo, "taper_width exceeds the " + std::to_string(lo) + " columns outside the window");
    Sinogram out = y;
    for (int k = 0; k < g.n_views; ++k) {
        auto row = out.data.row(k);
        const double left = row[static_cast<std::size_t>(lo)];
        const double right = row[static_cast<std::size_t>(hi - 1)];
        for (int j = 1; j <= lo; ++j) {
            const double w = cosine_taper(j, taper_width);
            row[static_cast<std::size_t>(lo - j)] = left * w;
            row[static_cast<std::size_t>(hi - 1 + j)] = right * w;
        }
    }
    out.truncated = false;
    return out;
}

/// Centered n_roi x n_roi crop.
inline Image crop_roi(const Image& f, int n_roi) {
    require(f.rows() == f.cols(), "crop_roi expects a square image");
    require(n_roi >= 1 && n_roi <= f.rows(), "n_roi must be in [1, n]");
    const int off = (f.rows() - n_roi) / 2;
    Image out = make_image(n_roi);
    for (int i = 0; i < n_roi; ++i) {
        for (int j = 0; j < n_roi; ++j) {
            out(i, j) = f(i + off, j + off);
        }
    }
    return out;
}

}  // namespace itomo
