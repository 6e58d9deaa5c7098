#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "itomo/nn/tensor.hpp"

namespace itomo::nn {

template <typename T>
using RowMajorMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Convolution: stride 1 cross-correlation, 3x3 with zero padding 1 or 1x1.
// Kernels are (out, in, k, k) row-major, so a kernel is an out x (in*k*k) matrix.
// ---------------------------------------------------------------------------

namespace detail {

/// Unfolds one sample into a (c*k*k) x (h*w) patch matrix.
template <typename T>
void im2col(const T* x, int c, int h, int w, int k, T* cols) {
    const int pad = k / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ci = 0; ci < c; ++ci) {
        const T* plane = x + static_cast<std::size_t>(ci) * hw;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* dst = cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
                const int dy = ky - pad;
                const int dx = kx - pad;
                for (int y = 0; y < h; ++y) {
                    T* row = dst + static_cast<std::size_t>(y) * w;
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) {
                        std::fill(row, row + w, T{});
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(sy) * w;
                    const int x_lo = std::max(0, -dx);
                    const int x_hi = std::min(w, w - dx);
                    std::fill(row, row + x_lo, T{});
                    std::copy(src + x_lo + dx, src + x_hi + dx, row + x_lo);
                    std::fill(row + x_hi, row + w, T{});
                }
            }
        }
    }
}

/// Adjoint of im2col: accumulates patch-matrix gradients back into dx.
template <typename T>
void col2im_add(const T* cols, int c, int h, int w, int k, T* dx) {
    const int pad = k / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ci = 0; ci < c; ++ci) {
        T* plane = dx + static_cast<std::size_t>(ci) * hw;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* src = cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * hw;
                const int dy = ky - pad;
                const int dxo = kx - pad;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const T* row = src + static_cast<std::size_t>(y) * w;
                    T* out = plane + static_cast<std::size_t>(sy) * w;
                    const int x_lo = std::max(0, -dxo);
                    const int x_hi = std::min(w, w - dxo);
                    for (int x = x_lo; x < x_hi; ++x) out[x + dxo] += row[x];
                }
            }
        }
    }
}

}  // namespace detail

template <typename T>
struct ConvGrads {
    Tensor4<T> dx;
    std::vector<T> dkernel;
    std::vector<T> dbias;
};

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const std::vector<T>& kernel, const std::vector<T>& bias, int out_c,
                          int k) {
    require(k == 1 || k == 3, "conv2d supports 1x1 and 3x3 kernels");
    const int in_c = x.c();
    const std::size_t patch = static_cast<std::size_t>(in_c) * k * k;
    require(kernel.size() == static_cast<std::size_t>(out_c) * patch, "conv2d: kernel size mismatch");
    require(bias.size() == static_cast<std::size_t>(out_c), "conv2d: bias size mismatch");
    const auto hw = static_cast<Eigen::Index>(x.plane());
    Tensor4<T> y(x.n(), out_c, x.h(), x.w());
    Eigen::Map<const RowMajorMatrix<T>> weights(kernel.data(), out_c, static_cast<Eigen::Index>(patch));
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.data(), out_c);
    std::vector<T> cols(k == 1 ? 0 : patch * x.plane());
    for (int n = 0; n < x.n(); ++n) {
        const T* source = x.sample(n);
        if (k != 1) {
            detail::im2col(source, in_c, x.h(), x.w(), k, cols.data());
            source = cols.data();
        }
        Eigen::Map<const RowMajorMatrix<T>> patches(source, static_cast<Eigen::Index>(patch), hw);
        Eigen::Map<RowMajorMatrix<T>> out(y.sample(n), out_c, hw);
        out.noalias() = weights * patches;
        out.colwise() += b;
    }
    return y;
}

/// Exact gradients of conv2d_forward given dL/dy.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& x, const std::vector<T>& kernel, const Tensor4<T>& dy, int k) {
    const int in_c = x.c();
    const int out_c = dy.c();
    const std::size_t patch = static_cast<std::size_t>(in_c) * k * k;
    const auto hw = static_cast<Eigen::Index>(x.plane());
    ConvGrads<T> g{Tensor4<T>(x.n(), in_c, x.h(), x.w()), std::vector<T>(kernel.size(), T{}),
                   std::vector<T>(static_cast<std::size_t>(out_c), T{})};
    Eigen::Map<const RowMajorMatrix<T>> weights(kernel.data(), out_c, static_cast<Eigen::Index>(patch));
    Eigen::Map<RowMajorMatrix<T>> dweights(g.dkernel.data(), out_c, static_cast<Eigen::Index>(patch));
    std::vector<T> cols(k == 1 ? 0 : patch * x.plane());
    std::vector<T> dcols(k == 1 ? 0 : patch * x.plane());
    for (int n = 0; n < x.n(); ++n) {
        Eigen::Map<const RowMajorMatrix<T>> grad_out(dy.sample(n), out_c, hw);
        const T* source = x.sample(n);
        if (k != 1) {
            detail::im2col(source, in_c, x.h(), x.w(), k, cols.data());
            source = cols.data();
        }
        Eigen::Map<const RowMajorMatrix<T>> patches(source, static_cast<Eigen::Index>(patch), hw);
        dweights.noalias() += grad_out * patches.transpose();
        // Plain loop: Eigen's vectorized row sums reorder additions by the
        // alignment of each row, which breaks run-to-run reproducibility.
        for (int o = 0; o < out_c; ++o) {
            const T* row = dy.channel(n, o);
            T acc{};
            for (Eigen::Index i = 0; i < hw; ++i) acc += row[i];
            g.dbias[static_cast<std::size_t>(o)] += acc;
        }
        if (k == 1) {
            Eigen::Map<RowMajorMatrix<T>> dx(g.dx.sample(n), static_cast<Eigen::Index>(patch), hw);
            dx.noalias() = weights.transpose() * grad_out;
        } else {
            Eigen::Map<RowMajorMatrix<T>> dpatches(dcols.data(), static_cast<Eigen::Index>(patch), hw);
            dpatches.noalias() = weights.transpose() * grad_out;
            detail::col2im_add(dcols.data(), in_c, x.h(), x.w(), k, g.dx.sample(n));
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& x) {
    Tensor4<T> y = x;
    for (T& v : y.values()) v = v > T{} ? v : T{};
    return y;
}

/// Subgradient 0 at x = 0.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& x, const Tensor4<T>& dy) {
    Tensor4<T> dx = dy;
    const auto xv = x.values();
    auto dv = dx.values();
    for (std::size_t i = 0; i < dv.size(); ++i) {
        if (!(xv[i] > T{})) dv[i] = T{};
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization over (batch, H, W) per channel.
// ---------------------------------------------------------------------------

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

enum class Mode { Train, Infer };

template <typename T>
struct BatchNormCache {
    Mode mode{Mode::Train};
    Tensor4<T> xhat;
    std::vector<T> inv_std;
    std::vector<T> batch_mean;
    std::vector<T> batch_var;  // biased
};

template <typename T>
Tensor4<T> batchnorm_forward(const Tensor4<T>& x, const std::vector<T>& gamma, const std::vector<T>& beta,
                             const std::vector<T>& running_mean, const std::vector<T>& running_var, Mode mode,
                             BatchNormCache<T>* cache) {
    const int channels = x.c();
    const std::size_t plane = x.plane();
    const double count = static_cast<double>(x.n()) * static_cast<double>(plane);
    Tensor4<T> y(x.n(), channels, x.h(), x.w());
    BatchNormCache<T> local;
    BatchNormCache<T>& c = cache != nullptr ? *cache : local;
    c.mode = mode;
    c.xhat = Tensor4<T>(x.n(), channels, x.h(), x.w());
    c.inv_std.assign(static_cast<std::size_t>(channels), T{});
    c.batch_mean.assign(static_cast<std::size_t>(channels), T{});
    c.batch_var.assign(static_cast<std::size_t>(channels), T{});
    for (int ch = 0; ch < channels; ++ch) {
        double mean = 0.0;
        double var = 0.0;
        if (mode == Mode::Train) {
            for (int n = 0; n < x.n(); ++n) {
                const T* p = x.channel(n, ch);
                for (std::size_t i = 0; i < plane; ++i) mean += p[i];
            }
            mean /= count;
            for (int n = 0; n < x.n(); ++n) {
                const T* p = x.channel(n, ch);
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mean;
                    var += d * d;
                }
            }
            var /= count;
        } else {
            mean = running_mean[static_cast<std::size_t>(ch)];
            var = running_var[static_cast<std::size_t>(ch)];
        }
        const auto inv = static_cast<T>(1.0 / std::sqrt(var + kBatchNormEps));
        const auto m = static_cast<T>(mean);
        const T g = gamma[static_cast<std::size_t>(ch)];
        const T b = beta[static_cast<std::size_t>(ch)];
        c.inv_std[static_cast<std::size_t>(ch)] = inv;
        c.batch_mean[static_cast<std::size_t>(ch)] = m;
        c.batch_var[static_cast<std::size_t>(ch)] = static_cast<T>(var);
        for (int n = 0; n < x.n(); ++n) {
            const T* p = x.channel(n, ch);
            T* xh = c.xhat.channel(n, ch);
            T* out = y.channel(n, ch);
            for (std::size_t i = 0; i < plane; ++i) {
                xh[i] = (p[i] - m) * inv;
                out[i] = g * xh[i] + b;
            }
        }
    }
    return y;
}

template <typename T>
struct BatchNormGrads {
    Tensor4<T> dx;
    std::vector<T> dgamma;
    std::vector<T> dbeta;
};

/// Train mode differentiates through the batch statistics; infer mode treats
/// the running statistics as constants.
template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor4<T>& dy, const std::vector<T>& gamma, const BatchNormCache<T>& c) {
    const int channels = dy.c();
    const std::size_t plane = dy.plane();
    const double count = static_cast<double>(dy.n()) * static_cast<double>(plane);
    BatchNormGrads<T> g{Tensor4<T>(dy.n(), channels, dy.h(), dy.w()), std::vector<T>(static_cast<std::size_t>(channels)),
                        std::vector<T>(static_cast<std::size_t>(channels))};
    for (int ch = 0; ch < channels; ++ch) {
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (int n = 0; n < dy.n(); ++n) {
            const T* d = dy.channel(n, ch);
            const T* xh = c.xhat.channel(n, ch);
            for (std::size_t i = 0; i < plane; ++i) {
                sum_dy += d[i];
                sum_dy_xhat += d[i] * xh[i];
            }
        }
        g.dgamma[static_cast<std::size_t>(ch)] = static_cast<T>(sum_dy_xhat);
        g.dbeta[static_cast<std::size_t>(ch)] = static_cast<T>(sum_dy);
        const double scale = static_cast<double>(gamma[static_cast<std::size_t>(ch)]) * c.inv_std[static_cast<std::size_t>(ch)];
        const double mean_dy = sum_dy / count;
        const double mean_dy_xhat = sum_dy_xhat / count;
        for (int n = 0; n < dy.n(); ++n) {
            const T* d = dy.channel(n, ch);
            const T* xh = c.xhat.channel(n, ch);
            T* out = g.dx.channel(n, ch);
            if (c.mode == Mode::Train) {
                for (std::size_t i = 0; i < plane; ++i) {
                    out[i] = static_cast<T>(scale * (d[i] - mean_dy - xh[i] * mean_dy_xhat));
                }
            } else {
                for (std::size_t i = 0; i < plane; ++i) out[i] = static_cast<T>(scale * d[i]);
            }
        }
    }
    return g;
}

/// running <- momentum * running + (1 - momentum) * batch.
template <typename T>
void update_running_stats(std::vector<T>& running_mean, std::vector<T>& running_var, const BatchNormCache<T>& c) {
    const auto mom = static_cast<T>(kBatchNormMomentum);
    for (std::size_t ch = 0; ch < running_mean.size(); ++ch) {
        running_mean[ch] = mom * running_mean[ch] + (T{1} - mom) * c.batch_mean[ch];
        running_var[ch] = mom * running_var[ch] + (T{1} - mom) * c.batch_var[ch];
    }
}

// ---------------------------------------------------------------------------
// 2x2 average pooling / replicate unpooling / channel concatenation
// ---------------------------------------------------------------------------

template <typename T>
Tensor4<T> avgpool2_forward(const Tensor4<T>& x) {
    require(x.h() % 2 == 0 && x.w() % 2 == 0, "avgpool2 needs even spatial dims");
    const int h = x.h() / 2;
    const int w = x.w() / 2;
    Tensor4<T> y(x.n(), x.c(), h, w);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const T* src = x.channel(n, c);
            T* dst = y.channel(n, c);
            for (int i = 0; i < h; ++i) {
                const T* r0 = src + static_cast<std::size_t>(2 * i) * x.w();
                const T* r1 = r0 + x.w();
                for (int j = 0; j < w; ++j) {
                    dst[static_cast<std::size_t>(i) * w + j] =
                        T{0.25} * (r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1]);
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> avgpool2_backward(const Tensor4<T>& dy) {
    Tensor4<T> dx(dy.n(), dy.c(), dy.h() * 2, dy.w() * 2);
    for (int n = 0; n < dy.n(); ++n) {
        for (int c = 0; c < dy.c(); ++c) {
            const T* src = dy.channel(n, c);
            T* dst = dx.channel(n, c);
            for (int i = 0; i < dx.h(); ++i) {
                for (int j = 0; j < dx.w(); ++j) {
                    dst[static_cast<std::size_t>(i) * dx.w() + j] =
                        T{0.25} * src[static_cast<std::size_t>(i / 2) * dy.w() + j / 2];
                }
            }
        }
    }
    return dx;
}

/// Copies each value into its 2x2 block.
template <typename T>
Tensor4<T> avgunpool2_forward(const Tensor4<T>& x) {
    Tensor4<T> y(x.n(), x.c(), x.h() * 2, x.w() * 2);
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            const T* src = x.channel(n, c);
            T* dst = y.channel(n, c);
            for (int i = 0; i < y.h(); ++i) {
                for (int j = 0; j < y.w(); ++j) {
                    dst[static_cast<std::size_t>(i) * y.w() + j] = src[static_cast<std::size_t>(i / 2) * x.w() + j / 2];
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> avgunpool2_backward(const Tensor4<T>& dy) {
    require(dy.h() % 2 == 0 && dy.w() % 2 == 0, "avgunpool2_backward needs even spatial dims");
    const int h = dy.h() / 2;
    const int w = dy.w() / 2;
    Tensor4<T> dx(dy.n(), dy.c(), h, w);
    for (int n = 0; n < dy.n(); ++n) {
        for (int c = 0; c < dy.c(); ++c) {
            const T* src = dy.channel(n, c);
            T* dst = dx.channel(n, c);
            for (int i = 0; i < h; ++i) {
                const T* r0 = src + static_cast<std::size_t>(2 * i) * dy.w();
                const T* r1 = r0 + dy.w();
                for (int j = 0; j < w; ++j) {
                    dst[static_cast<std::size_t>(i) * w + j] = r0[2 * j] + r0[2 * j + 1] + r1[2 * j] + r1[2 * j + 1];
                }
            }
        }
    }
    return dx;
}

/// Stacks channels of a then b.
template <typename T>
Tensor4<T> concat_forward(const Tensor4<T>& a, const Tensor4<T>& b) {
    require(a.n() == b.n() && a.h() == b.h() && a.w() == b.w(), "concat: batch/spatial mismatch");
    Tensor4<T> y(a.n(), a.c() + b.c(), a.h(), a.w());
    for (int n = 0; n < a.n(); ++n) {
        std::copy(a.sample(n), a.sample(n) + a.sample_size(), y.sample(n));
        std::copy(b.sample(n), b.sample(n) + b.sample_size(), y.sample(n) + a.sample_size());
    }
    return y;
}

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> concat_backward(const Tensor4<T>& dy, int a_channels) {
    Tensor4<T> da(dy.n(), a_channels, dy.h(), dy.w());
    Tensor4<T> db(dy.n(), dy.c() - a_channels, dy.h(), dy.w());
    for (int n = 0; n < dy.n(); ++n) {
        std::copy(dy.sample(n), dy.sample(n) + da.sample_size(), da.sample(n));
        std::copy(dy.sample(n) + da.sample_size(), dy.sample(n) + dy.sample_size(), db.sample(n));
    }
    return {std::move(da), std::move(db)};
}

}  // namespace itomo::nn
