#pragma once

#include <cmath>
#include <algorithm>
#include <cstddef>
#include <ostream>
#include <string>

#include "itomo/grid.hpp"

namespace itomo {

/// PSNR reported for identical images.
inline constexpr double kPsnrCap = 99.0;

struct MetricReport {
    double psnr_db{0.0};
    double nmse{0.0};
    int n_pixels{0};
};

inline double mse(const Image& ref, const Image& test) {
    require(ref.rows() == test.rows() && ref.cols() == test.cols(), "metric inputs must have equal dimensions");
    require(!ref.empty(), "metric inputs must be non-empty");
    double acc = 0.0;
    const auto a = ref.values();
    const auto b = test.values();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = b[i] - a[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

/// 10 log10(peak^2 / MSE), capped at kPsnrCap.
inline double psnr(const Image& ref, const Image& test, double peak = 1.0) {
    require(peak > 0.0, "psnr peak must be positive");
    const double err = mse(ref, test);
    if (err == 0.0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / err));
}

/// ||test - ref||^2 / ||ref||^2.
inline double nmse(const Image& ref, const Image& test) {
    require(ref.rows() == test.rows() && ref.cols() == test.cols(), "metric inputs must have equal dimensions");
    double num = 0.0;
    double den = 0.0;
    const auto a = ref.values();
    const auto b = test.values();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = b[i] - a[i];
        num += d * d;
        den += a[i] * a[i];
    }
    require(den > 0.0, "nmse reference must not be all-zero");
    return num / den;
}

inline MetricReport evaluate(const Image& ref, const Image& test, double peak = 1.0) {
    return MetricReport{psnr(ref, test, peak), nmse(ref, test), static_cast<int>(ref.size())};
}

/// Drops `border` pixels on every side.
inline Image strip_border(const Image& f, int border) {
    require(2 * border < f.rows() && 2 * border < f.cols(), "border too wide");
    Image out(f.rows() - 2 * border, f.cols() - 2 * border);
    for (int i = 0; i < out.rows(); ++i) {
        for (int j = 0; j < out.cols(); ++j) {
            out(i, j) = f(i + border, j + border);
        }
    }
    return out;
}

inline void write_csv_header(std::ostream& os) { os << "label,psnr_db,nmse,n_pixels\n"; }

inline void write_csv_row(std::ostream& os, const std::string& label, const MetricReport& r) {
    os << label << ',' << r.psnr_db << ',' << r.nmse << ',' << r.n_pixels << '\n';
}

}  // namespace itomo
