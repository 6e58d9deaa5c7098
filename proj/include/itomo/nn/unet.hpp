#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "itomo/nn/layers.hpp"
#include "itomo/nn/tensor.hpp"
#include "itomo/pcg32.hpp"

namespace itomo::nn {

struct NetSpec {
    int stages{3};
    int base_channels{16};
    int input_channels{1};
    int output_channels{1};

    void validate() const {
        require(stages >= 1, "net: stages must be >= 1");
        require(base_channels >= 1, "net: base_channels must be >= 1");
        require(input_channels == 1 && output_channels == 1, "net: input and output channels must be 1");
    }

    [[nodiscard]] int channels(int level) const { return base_channels << level; }
    [[nodiscard]] int divisor() const { return 1 << stages; }

    friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

/// One convolution, optionally followed by ReLU and batch norm.
struct ConvBlockSpec {
    std::string name;
    int in_channels;
    int out_channels;
    int kernel;
    bool relu_bn;
};

/// Blocks in execution order. Encoder level s has two 3x3 blocks
/// (c_{s-1} -> c_s -> c_s, c_s = C0 * 2^s); decoder level s has an "up" block
/// halving channels after unpooling, then two blocks after the skip concat
/// (2 c_s -> c_s -> c_s); a 1x1 head maps C0 to one channel.
inline std::vector<ConvBlockSpec> unet_blocks(const NetSpec& spec) {
    spec.validate();
    std::vector<ConvBlockSpec> blocks;
    blocks.push_back({"enc0.conv0", spec.input_channels, spec.channels(0), 3, true});
    blocks.push_back({"enc0.conv1", spec.channels(0), spec.channels(0), 3, true});
    for (int s = 1; s <= spec.stages; ++s) {
        const std::string p = "enc" + std::to_string(s);
        blocks.push_back({p + ".conv0", spec.channels(s - 1), spec.channels(s), 3, true});
        blocks.push_back({p + ".conv1", spec.channels(s), spec.channels(s), 3, true});
    }
    for (int s = spec.stages - 1; s >= 0; --s) {
        const std::string p = "dec" + std::to_string(s);
        blocks.push_back({p + ".up", spec.channels(s + 1), spec.channels(s), 3, true});
        blocks.push_back({p + ".conv0", 2 * spec.channels(s), spec.channels(s), 3, true});
        blocks.push_back({p + ".conv1", spec.channels(s), spec.channels(s), 3, true});
    }
    blocks.push_back({"head", spec.channels(0), spec.output_channels, 1, false});
    return blocks;
}

enum class ParamKind { Kernel, Bias, Gamma, Beta, RunningMean, RunningVar };

inline const char* param_suffix(ParamKind k) {
    switch (k) {
        case ParamKind::Kernel: return "weight";
        case ParamKind::Bias: return "bias";
        case ParamKind::Gamma: return "bn.gamma";
        case ParamKind::Beta: return "bn.beta";
        case ParamKind::RunningMean: return "bn.running_mean";
        case ParamKind::RunningVar: return "bn.running_var";
    }
    return "";
}

/// Parameter tensor indices of one block; bn indices are -1 without batch norm.
struct BlockSlots {
    int kernel{-1};
    int bias{-1};
    int gamma{-1};
    int beta{-1};
    int running_mean{-1};
    int running_var{-1};
};

template <typename T>
struct NetworkParams {
    NetSpec spec;
    std::vector<ConvBlockSpec> blocks;
    std::vector<BlockSlots> slots;
    std::vector<ParamTensor<T>> tensors;
    std::vector<ParamKind> kinds;

    /// Zero-filled tensors laid out for `spec`; running_var starts at 1.
    static NetworkParams zeros(const NetSpec& spec) {
        NetworkParams p;
        p.spec = spec;
        p.blocks = unet_blocks(spec);
        for (const auto& b : p.blocks) {
            BlockSlots s;
            auto add = [&](ParamKind kind, std::vector<int> shape, T value) {
                ParamTensor<T> t{b.name + "." + param_suffix(kind), std::move(shape), {}};
                t.data.assign(t.numel(), value);
                p.tensors.push_back(std::move(t));
                p.kinds.push_back(kind);
                return static_cast<int>(p.tensors.size()) - 1;
            };
            s.kernel = add(ParamKind::Kernel, {b.out_channels, b.in_channels, b.kernel, b.kernel}, T{});
            s.bias = add(ParamKind::Bias, {b.out_channels}, T{});
            if (b.relu_bn) {
                s.gamma = add(ParamKind::Gamma, {b.out_channels}, T{});
                s.beta = add(ParamKind::Beta, {b.out_channels}, T{});
                s.running_mean = add(ParamKind::RunningMean, {b.out_channels}, T{});
                s.running_var = add(ParamKind::RunningVar, {b.out_channels}, T{1});
            }
            p.slots.push_back(s);
        }
        return p;
    }

    [[nodiscard]] const ParamTensor<T>& operator[](int i) const { return tensors[static_cast<std::size_t>(i)]; }
    ParamTensor<T>& operator[](int i) { return tensors[static_cast<std::size_t>(i)]; }

    [[nodiscard]] int find(const std::string& name) const {
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            if (tensors[i].name == name) return static_cast<int>(i);
        }
        return -1;
    }

    /// Parameters that receive gradients (running statistics excluded).
    [[nodiscard]] bool trainable(std::size_t i) const {
        return kinds[i] != ParamKind::RunningMean && kinds[i] != ParamKind::RunningVar;
    }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            if (trainable(i)) n += tensors[i].numel();
        }
        return n;
    }

    /// Checks shapes against the descriptor and running_var > 0.
    void validate() const {
        const NetworkParams ref = zeros(spec);
        require(tensors.size() == ref.tensors.size(), "net params: tensor count does not match the architecture");
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            require(tensors[i].name == ref.tensors[i].name, "net params: unexpected tensor " + tensors[i].name);
            require(tensors[i].shape == ref.tensors[i].shape, "net params: shape mismatch for " + tensors[i].name);
            require(tensors[i].data.size() == tensors[i].numel(), "net params: payload mismatch for " + tensors[i].name);
            for (T v : tensors[i].data) {
                require(std::isfinite(static_cast<double>(v)), "net params: non-finite value in " + tensors[i].name);
                if (kinds[i] == ParamKind::RunningVar) require(v > T{}, "net params: running_var must be > 0");
            }
        }
    }

    template <typename U>
    [[nodiscard]] NetworkParams<U> cast() const {
        NetworkParams<U> out;
        out.spec = spec;
        out.blocks = blocks;
        out.slots = slots;
        out.kinds = kinds;
        for (const auto& t : tensors) {
            ParamTensor<U> u{t.name, t.shape, {}};
            u.data.reserve(t.data.size());
            for (T v : t.data) u.data.push_back(static_cast<U>(v));
            out.tensors.push_back(std::move(u));
        }
        return out;
    }

    friend bool operator==(const NetworkParams& a, const NetworkParams& b) {
        return a.spec == b.spec && a.tensors == b.tensors;
    }
};

/// Kernels ~ N(0, 2 / fan_in) from one PCG32 stream in layout order; biases
/// and beta 0, gamma 1, running stats (0, 1).
template <typename T>
NetworkParams<T> he_init(const NetSpec& spec, std::uint64_t seed) {
    NetworkParams<T> p = NetworkParams<T>::zeros(spec);
    Pcg32 rng(seed);
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
        auto& t = p.tensors[i];
        switch (p.kinds[i]) {
            case ParamKind::Kernel: {
                const double fan_in = static_cast<double>(t.shape[1]) * t.shape[2] * t.shape[3];
                const double sd = std::sqrt(2.0 / fan_in);
                for (T& v : t.data) v = static_cast<T>(sd * rng.normal());
                break;
            }
            case ParamKind::Gamma:
            case ParamKind::RunningVar:
                std::fill(t.data.begin(), t.data.end(), T{1});
                break;
            default:
                std::fill(t.data.begin(), t.data.end(), T{});
        }
    }
    return p;
}

template <typename T>
struct BlockCache {
    Tensor4<T> input;
    Tensor4<T> conv_out;
    BatchNormCache<T> bn;
};

template <typename T>
struct UnetCache {
    Mode mode{Mode::Train};
    std::vector<BlockCache<T>> blocks;  // one per block, execution order
    std::vector<int> skip_channels;     // channels of each skip tensor
};

namespace detail {

template <typename T>
Tensor4<T> block_forward(const NetworkParams<T>& p, std::size_t bi, const Tensor4<T>& x, Mode mode,
                         BlockCache<T>* cache) {
    const ConvBlockSpec& b = p.blocks[bi];
    const BlockSlots& s = p.slots[bi];
    Tensor4<T> conv = conv2d_forward(x, p[s.kernel].data, p[s.bias].data, b.out_channels, b.kernel);
    if (!b.relu_bn) {
        if (cache != nullptr) cache->input = x;
        return conv;
    }
    Tensor4<T> act = relu_forward(conv);
    BatchNormCache<T> bn_local;
    Tensor4<T> out = batchnorm_forward(act, p[s.gamma].data, p[s.beta].data, p[s.running_mean].data,
                                       p[s.running_var].data, mode, cache != nullptr ? &cache->bn : &bn_local);
    if (cache != nullptr) {
        cache->input = x;
        cache->conv_out = std::move(conv);
    }
    return out;
}

}  // namespace detail

/// U-Net forward pass. In train mode batch norm uses batch statistics; the
/// params are never modified (see apply_running_stats). Pass a cache to
/// enable unet_backward.
template <typename T>
Tensor4<T> unet_forward(const Tensor4<T>& x, const NetworkParams<T>& p, Mode mode, UnetCache<T>* cache = nullptr) {
    const NetSpec& spec = p.spec;
    require(x.c() == spec.input_channels, "unet: input channel count mismatch");
    require(x.h() % spec.divisor() == 0 && x.w() % spec.divisor() == 0,
            "unet: spatial dims must be divisible by 2^stages");
    if (cache != nullptr) {
        cache->mode = mode;
        cache->blocks.assign(p.blocks.size(), BlockCache<T>{});
        cache->skip_channels.clear();
    }
    std::size_t bi = 0;
    auto run = [&](const Tensor4<T>& in) {
        Tensor4<T> out = detail::block_forward(p, bi, in, mode, cache != nullptr ? &cache->blocks[bi] : nullptr);
        ++bi;
        return out;
    };
    std::vector<Tensor4<T>> skips;
    Tensor4<T> a = run(x);
    a = run(a);
    skips.push_back(a);
    for (int s = 1; s <= spec.stages; ++s) {
        a = run(avgpool2_forward(a));
        a = run(a);
        if (s < spec.stages) skips.push_back(a);
    }
    for (int s = spec.stages - 1; s >= 0; --s) {
        Tensor4<T> up = run(avgunpool2_forward(a));
        if (cache != nullptr) cache->skip_channels.push_back(up.c());
        a = run(concat_forward(up, skips[static_cast<std::size_t>(s)]));
        a = run(a);
    }
    return run(a);
}

template <typename T>
struct UnetGrads {
    std::vector<ParamTensor<T>> params;  // aligned with NetworkParams::tensors; running stats stay zero
    Tensor4<T> input;
};

namespace detail {

template <typename T>
Tensor4<T> block_backward(const NetworkParams<T>& p, std::size_t bi, const BlockCache<T>& c, const Tensor4<T>& dy,
                          UnetGrads<T>& g) {
    const ConvBlockSpec& b = p.blocks[bi];
    const BlockSlots& s = p.slots[bi];
    Tensor4<T> dconv;
    if (b.relu_bn) {
        BatchNormGrads<T> bn = batchnorm_backward(dy, p[s.gamma].data, c.bn);
        g.params[static_cast<std::size_t>(s.gamma)].data = std::move(bn.dgamma);
        g.params[static_cast<std::size_t>(s.beta)].data = std::move(bn.dbeta);
        dconv = relu_backward(c.conv_out, bn.dx);
    } else {
        dconv = dy;
    }
    ConvGrads<T> cg = conv2d_backward(c.input, p[s.kernel].data, dconv, b.kernel);
    g.params[static_cast<std::size_t>(s.kernel)].data = std::move(cg.dkernel);
    g.params[static_cast<std::size_t>(s.bias)].data = std::move(cg.dbias);
    return std::move(cg.dx);
}

template <typename T>
void add_into(Tensor4<T>& acc, const Tensor4<T>& x) {
    auto a = acc.values();
    const auto b = x.values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace detail

/// Gradients of sum(grad_out * output) with respect to every trainable
/// parameter and the input, through the cached forward pass.
template <typename T>
UnetGrads<T> unet_backward(const Tensor4<T>& grad_out, const UnetCache<T>& cache, const NetworkParams<T>& p) {
    require(cache.blocks.size() == p.blocks.size(), "unet_backward: cache does not match params");
    const NetSpec& spec = p.spec;
    UnetGrads<T> g;
    g.params.reserve(p.tensors.size());
    for (const auto& t : p.tensors) g.params.push_back(ParamTensor<T>{t.name, t.shape, std::vector<T>(t.numel(), T{})});

    std::size_t bi = p.blocks.size();
    auto back = [&](const Tensor4<T>& dy) {
        --bi;
        return detail::block_backward(p, bi, cache.blocks[bi], dy, g);
    };
    std::vector<Tensor4<T>> dskips(static_cast<std::size_t>(spec.stages));
    Tensor4<T> d = back(grad_out);
    for (int s = 0; s < spec.stages; ++s) {
        d = back(d);
        d = back(d);
        auto [dup, dskip] = concat_backward(d, cache.skip_channels[static_cast<std::size_t>(spec.stages - 1 - s)]);
        dskips[static_cast<std::size_t>(s)] = std::move(dskip);
        d = avgunpool2_backward(back(dup));
    }
    for (int s = spec.stages; s >= 1; --s) {
        d = back(d);
        d = back(d);
        d = avgpool2_backward(d);
        detail::add_into(d, dskips[static_cast<std::size_t>(s - 1)]);
    }
    d = back(d);
    d = back(d);
    g.input = std::move(d);
    return g;
}

/// Folds the batch statistics recorded by a train-mode forward pass into the
/// running statistics.
template <typename T>
void apply_running_stats(NetworkParams<T>& p, const UnetCache<T>& cache) {
    require(cache.mode == Mode::Train, "apply_running_stats needs a train-mode cache");
    for (std::size_t bi = 0; bi < p.blocks.size(); ++bi) {
        if (!p.blocks[bi].relu_bn) continue;
        const BlockSlots& s = p.slots[bi];
        update_running_stats(p[s.running_mean].data, p[s.running_var].data, cache.blocks[bi].bn);
    }
}

}  // namespace itomo::nn
