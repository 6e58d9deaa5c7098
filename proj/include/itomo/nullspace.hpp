#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <utility>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "itomo/fbp.hpp"
#include "itomo/geometry.hpp"
#include "itomo/grid.hpp"
#include "itomo/projector.hpp"

namespace itomo {

/// A chord parallel to the x axis at offset v, sampled on [-L, L].
///
/// The grid has an odd number of samples so u = 0 is a node. mu_v is the
/// half-length of I_mu(v) = {u : u^2 + v^2 <= mu^2}.
struct ChordLine {
    double v{0.0};
    double mu{1.0};
    double half_length{2.0};
    int n_samples{0};

    static ChordLine make(double v, double mu, double half_length, int n_samples) {
        ChordLine c{v, mu, half_length, n_samples};
        c.validate();
        return c;
    }

    void validate() const {
        require(mu > 0.0, "chord: mu must be positive");
        require(std::abs(v) < mu, "chord: |v| must be < mu");
        require(half_length > mu, "chord: grid half-length must exceed mu");
        require(n_samples >= 9 && n_samples % 2 == 1, "chord: n_samples must be odd and >= 9");
    }

    [[nodiscard]] double mu_v() const { return std::sqrt(mu * mu - v * v); }
    [[nodiscard]] double step() const { return 2.0 * half_length / (n_samples - 1); }
    [[nodiscard]] double u(int i) const { return -half_length + i * step(); }
    [[nodiscard]] bool in_interval(int i) const { return std::abs(u(i)) <= mu_v(); }
};

/// psi sampled on a chord grid; must vanish on I_mu(v) plus a guard gap.
struct NullSeed {
    std::vector<double> psi;
};

inline constexpr int kNullGuardSteps = 2;

/// Full-line Hilbert transform, Hf(u) = p.v. (1/pi) int f(u') / (u - u') du',
/// as the multiplier -i sgn(omega) on a zero-padded FFT (>= 2x length).
inline std::vector<double> discrete_hilbert(const std::vector<double>& f) {
    require(f.size() >= 8, "discrete_hilbert needs at least 8 samples");
    const int len = static_cast<int>(f.size());
    const int padded = next_pow2(2 * len);
    std::vector<double> buf(static_cast<std::size_t>(padded), 0.0);
    std::copy(f.begin(), f.end(), buf.begin());
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, buf);
    const std::complex<double> minus_i(0.0, -1.0);
    for (int k = 0; k < padded; ++k) {
        auto& z = spec[static_cast<std::size_t>(k)];
        if (k == 0 || k == padded / 2) {
            z = 0.0;
        } else if (k < padded / 2) {
            z *= minus_i;
        } else {
            z *= -minus_i;
        }
    }
    std::vector<double> out;
    fft.inv(out, spec);
    out.resize(f.size());
    return out;
}

inline void validate_seed(const ChordLine& c, const NullSeed& seed) {
    c.validate();
    require(static_cast<int>(seed.psi.size()) == c.n_samples, "null seed length must match the chord grid");
    const double guard = c.mu_v() + kNullGuardSteps * c.step();
    for (int i = 0; i < c.n_samples; ++i) {
        if (seed.psi[static_cast<std::size_t>(i)] != 0.0 && std::abs(c.u(i)) <= guard) {
            throw InvalidArgument("null seed support intersects I_mu(v) or its guard gap");
        }
    }
}

/// Element of the null space along one chord:
/// g(u) = -int_{u' not in I_mu(v)} psi(u') / (pi (u - u')) du'.
///
/// Quadrature is the composite trapezoid rule with step 2 du on the nodes at
/// odd offsets from u, which never lands on the singular point u' = u. Inside
/// I_mu(v) the integrand is smooth and this is an ordinary trapezoid sum.
inline std::vector<double> nullspace_sample(const ChordLine& c, const NullSeed& seed) {
    validate_seed(c, seed);
    const double du = c.step();
    std::vector<int> support;
    for (int k = 0; k < c.n_samples; ++k) {
        if (seed.psi[static_cast<std::size_t>(k)] != 0.0) {
            support.push_back(k);
        }
    }
    std::vector<double> g(static_cast<std::size_t>(c.n_samples), 0.0);
    const double weight = -2.0 * du / std::numbers::pi;
    for (int j = 0; j < c.n_samples; ++j) {
        double acc = 0.0;
        for (int k : support) {
            const int offset = j - k;
            if ((offset & 1) == 0) {
                continue;
            }
            acc += seed.psi[static_cast<std::size_t>(k)] / (offset * du);
        }
        g[static_cast<std::size_t>(j)] = weight * acc;
    }
    return g;
}

/// Gaussian bump seed centered at `center` with width sigma, cut to zero below
/// 1e-16 of its peak and inside the guard region.
inline NullSeed gaussian_seed(const ChordLine& c, double center, double sigma, double amplitude) {
    NullSeed s{std::vector<double>(static_cast<std::size_t>(c.n_samples), 0.0)};
    const double guard = c.mu_v() + kNullGuardSteps * c.step();
    for (int i = 0; i < c.n_samples; ++i) {
        const double z = (c.u(i) - center) / sigma;
        const double val = amplitude * std::exp(-0.5 * z * z);
        if (std::abs(c.u(i)) > guard && std::abs(val) > 1e-16 * std::abs(amplitude)) {
            s.psi[static_cast<std::size_t>(i)] = val;
        }
    }
    return s;
}

/// 2-D DFT energy fraction at radial frequency <= fraction * Nyquist.
inline double spectral_energy_fraction(const Image& f, double fraction) {
    const int rows = f.rows();
    const int cols = f.cols();
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> grid(static_cast<std::size_t>(rows) * cols);
    std::vector<std::complex<double>> line_in;
    std::vector<std::complex<double>> line_out;
    for (int i = 0; i < rows; ++i) {
        line_in.assign(f.row(i).begin(), f.row(i).end());
        fft.fwd(line_out, line_in);
        std::copy(line_out.begin(), line_out.end(), grid.begin() + static_cast<std::ptrdiff_t>(i) * cols);
    }
    line_in.resize(static_cast<std::size_t>(rows));
    for (int j = 0; j < cols; ++j) {
        for (int i = 0; i < rows; ++i) line_in[static_cast<std::size_t>(i)] = grid[static_cast<std::size_t>(i) * cols + j];
        fft.fwd(line_out, line_in);
        for (int i = 0; i < rows; ++i) grid[static_cast<std::size_t>(i) * cols + j] = line_out[static_cast<std::size_t>(i)];
    }
    double low = 0.0;
    double total = 0.0;
    for (int i = 0; i < rows; ++i) {
        const double ki = (i <= rows / 2 ? i : i - rows) / (0.5 * rows);
        for (int j = 0; j < cols; ++j) {
            const double kj = (j <= cols / 2 ? j : j - cols) / (0.5 * cols);
            const double e = std::norm(grid[static_cast<std::size_t>(i) * cols + j]);
            total += e;
            if (std::hypot(ki, kj) <= fraction) {
                low += e;
            }
        }
    }
    return total > 0.0 ? low / total : 1.0;
}

/// Mean value on concentric rings around the image center, innermost first.
inline std::vector<double> ring_averages(const Image& f, int n_rings) {
    require(n_rings >= 1, "n_rings must be positive");
    const int n = f.rows();
    const double r_max = 0.5 * n;
    std::vector<double> sum(static_cast<std::size_t>(n_rings), 0.0);
    std::vector<int> count(static_cast<std::size_t>(n_rings), 0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < f.cols(); ++j) {
            const double r = std::hypot(i + 0.5 - 0.5 * n, j + 0.5 - 0.5 * f.cols());
            const int ring = static_cast<int>(r / r_max * n_rings);
            if (ring < n_rings) {
                sum[static_cast<std::size_t>(ring)] += f(i, j);
                ++count[static_cast<std::size_t>(ring)];
            }
        }
    }
    for (int r = 0; r < n_rings; ++r) {
        if (count[static_cast<std::size_t>(r)] > 0) sum[static_cast<std::size_t>(r)] /= count[static_cast<std::size_t>(r)];
    }
    return sum;
}

/// Cupping decomposition on the ROI: (M T R f*, M T R f* - f*).
inline std::pair<Image, Image> make_cupping_image(const Image& f_star, const Geometry& g, const FilterSpec& spec,
                                                  int n_roi) {
    const int n = f_star.rows();
    Sinogram y = radon_forward(f_star, g);
    if (g.is_truncating()) {
        y = truncate(y);
    }
    Image recon = crop_roi(fbp_reconstruct(y, spec, n), n_roi);
    const Image truth = crop_roi(f_star, n_roi);
    Image err = recon;
    for (std::size_t i = 0; i < err.size(); ++i) {
        err.values()[i] -= truth.values()[i];
    }
    return {std::move(recon), std::move(err)};
}

}  // namespace itomo
