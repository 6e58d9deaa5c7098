#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "itomo/nn/unet.hpp"
#include "itomo/pcg32.hpp"

using namespace itomo;
using namespace itomo::nn;

namespace {

using T4 = Tensor4<double>;

T4 random_tensor(int n, int c, int h, int w, std::uint64_t seed) {
    Pcg32 rng(seed);
    T4 t(n, c, h, w);
    for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

NetworkParams<double> random_params(const NetSpec& spec, std::uint64_t seed) {
    NetworkParams<double> p = he_init<double>(spec, seed);
    Pcg32 rng(seed + 1);
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
        for (double& v : p.tensors[i].data) {
            switch (p.kinds[i]) {
                case ParamKind::Bias:
                case ParamKind::Beta:
                case ParamKind::RunningMean: v = rng.uniform(-0.3, 0.3); break;
                case ParamKind::Gamma:
                case ParamKind::RunningVar: v = rng.uniform(0.5, 1.5); break;
                default: break;
            }
        }
    }
    return p;
}

double weighted_sum(const T4& y, const T4& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += y.data()[i] * w.data()[i];
    return acc;
}

}  // namespace

TEST(NetSpec, BlockLayoutAndParameterCount) {
    const NetSpec spec{2, 4};
    const auto blocks = unet_blocks(spec);
    ASSERT_EQ(blocks.size(), 2u + 4u + 6u + 1u);
    EXPECT_EQ(blocks.front().name, "enc0.conv0");
    EXPECT_EQ(blocks.back().name, "head");
    EXPECT_EQ(blocks.back().kernel, 1);
    EXPECT_FALSE(blocks.back().relu_bn);
    const auto p = NetworkParams<float>::zeros(spec);
    std::size_t expected = 0;
    for (const auto& b : blocks) {
        expected += static_cast<std::size_t>(b.out_channels) * b.in_channels * b.kernel * b.kernel + b.out_channels;
        if (b.relu_bn) expected += 2u * static_cast<std::size_t>(b.out_channels);
    }
    EXPECT_EQ(p.parameter_count(), expected);
    EXPECT_NE(p.find("dec1.up.bn.running_var"), -1);
    EXPECT_EQ(p.find("dec2.up.weight"), -1);
}

TEST(Unet, OutputShapeMatchesInput) {
    for (int stages : {1, 2, 3}) {
        const NetSpec spec{stages, 2};
        const auto p = he_init<double>(spec, 3);
        const T4 x = random_tensor(2, 1, 16, 24, 4);
        const T4 y = unet_forward(x, p, Mode::Train);
        EXPECT_TRUE(y.same_shape(x)) << stages;
    }
}

TEST(Unet, RejectsIndivisibleInput) {
    const auto p = he_init<double>(NetSpec{3, 2}, 3);
    EXPECT_THROW(unet_forward(random_tensor(1, 1, 12, 16, 1), p, Mode::Infer), InvalidArgument);
}

TEST(Unet, ZeroParamsGiveZeroOutput) {
    const auto p = NetworkParams<double>::zeros(NetSpec{2, 3});
    const T4 y = unet_forward(random_tensor(2, 1, 8, 8, 5), p, Mode::Train);
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Unet, ForwardIsDeterministic) {
    const auto p = he_init<float>(NetSpec{3, 4}, 9);
    Tensor4<float> x(2, 1, 16, 16);
    Pcg32 rng(10);
    for (float& v : x.values()) v = static_cast<float>(rng.uniform());
    EXPECT_EQ(unet_forward(x, p, Mode::Train), unet_forward(x, p, Mode::Train));
    EXPECT_EQ(unet_forward(x, p, Mode::Infer), unet_forward(x, p, Mode::Infer));
}

TEST(Unet, InferModeIsPureAndIgnoresBatchComposition) {
    const auto p = random_params(NetSpec{2, 3}, 11);
    const auto before = p;
    const T4 x = random_tensor(3, 1, 8, 8, 12);
    UnetCache<double> cache;
    const T4 y = unet_forward(x, p, Mode::Infer, &cache);
    EXPECT_EQ(p, before);
    // Each sample's output must not depend on the rest of the batch.
    T4 single(1, 1, 8, 8);
    std::copy(x.sample(1), x.sample(1) + single.size(), single.values().begin());
    const T4 y1 = unet_forward(single, p, Mode::Infer);
    for (std::size_t i = 0; i < y1.size(); ++i) EXPECT_EQ(y1.data()[i], y.sample(1)[i]);
}

TEST(Unet, RunningStatsUpdateOnlyThroughExplicitCall) {
    auto p = he_init<double>(NetSpec{2, 2}, 13);
    const auto before = p;
    UnetCache<double> cache;
    unet_forward(random_tensor(2, 1, 8, 8, 14), p, Mode::Train, &cache);
    EXPECT_EQ(p, before);
    apply_running_stats(p, cache);
    const int rm = p.find("enc0.conv0.bn.running_mean");
    EXPECT_NE(p[rm].data, before[rm].data);
    EXPECT_EQ(p[p.find("enc0.conv0.weight")].data, before[before.find("enc0.conv0.weight")].data);
}

TEST(Unet, ZeroUpstreamGradientGivesZeroGradients) {
    const auto p = random_params(NetSpec{2, 2}, 15);
    const T4 x = random_tensor(2, 1, 8, 8, 16);
    UnetCache<double> cache;
    const T4 y = unet_forward(x, p, Mode::Train, &cache);
    const UnetGrads<double> g = unet_backward(T4(y.n(), y.c(), y.h(), y.w()), cache, p);
    for (const auto& t : g.params) {
        for (double v : t.data) EXPECT_EQ(v, 0.0) << t.name;
    }
    for (double v : g.input.values()) EXPECT_EQ(v, 0.0);
}

TEST(Unet, GradientIsLinearInUpstreamGradient) {
    const auto p = random_params(NetSpec{2, 2}, 17);
    const T4 x = random_tensor(2, 1, 8, 8, 18);
    UnetCache<double> cache;
    unet_forward(x, p, Mode::Train, &cache);
    const T4 a = random_tensor(2, 1, 8, 8, 19);
    const T4 b = random_tensor(2, 1, 8, 8, 20);
    T4 combo(2, 1, 8, 8);
    for (std::size_t i = 0; i < combo.size(); ++i) combo.data()[i] = 2.0 * a.data()[i] - 3.0 * b.data()[i];
    const auto ga = unet_backward(a, cache, p);
    const auto gb = unet_backward(b, cache, p);
    const auto gc = unet_backward(combo, cache, p);
    for (std::size_t t = 0; t < gc.params.size(); ++t) {
        for (std::size_t i = 0; i < gc.params[t].data.size(); ++i) {
            const double expect = 2.0 * ga.params[t].data[i] - 3.0 * gb.params[t].data[i];
            EXPECT_NEAR(gc.params[t].data[i], expect, 1e-10 * (1.0 + std::abs(expect)));
        }
    }
}

// End-to-end central differences over every parameter group (sampled entries)
// and the input, with batch statistics differentiated in train mode.
TEST(Unet, FullNetworkGradientMatchesFiniteDifferences) {
    for (Mode mode : {Mode::Train, Mode::Infer}) {
        auto p = random_params(NetSpec{2, 2}, 21);
        T4 x = random_tensor(2, 1, 8, 8, 22);
        const T4 w = random_tensor(2, 1, 8, 8, 23);
        auto loss = [&] { return weighted_sum(unet_forward(x, p, mode), w); };
        UnetCache<double> cache;
        unet_forward(x, p, mode, &cache);
        const UnetGrads<double> g = unet_backward(w, cache, p);
        const double h = 1e-6;
        Pcg32 pick(24);
        auto check = [&](std::span<double> values, std::span<const double> analytic, const std::string& name) {
            const std::size_t count = std::min<std::size_t>(values.size(), 12);
            double err = 0.0;
            double ref = 0.0;
            for (std::size_t k = 0; k < count; ++k) {
                const std::size_t i = values.size() <= 12 ? k : pick.bounded(static_cast<std::uint32_t>(values.size()));
                const double orig = values[i];
                values[i] = orig + h;
                const double up = loss();
                values[i] = orig - h;
                const double down = loss();
                values[i] = orig;
                const double fd = (up - down) / (2.0 * h);
                err = std::max(err, std::abs(fd - analytic[i]));
                ref = std::max(ref, std::abs(fd));
            }
            EXPECT_LT(err / std::max(ref, 1e-8), 1e-5) << name << (mode == Mode::Train ? " train" : " infer");
        };
        for (std::size_t t = 0; t < p.tensors.size(); ++t) {
            if (!p.trainable(t)) continue;
            check(p.tensors[t].data, g.params[t].data, p.tensors[t].name);
        }
        check(x.values(), g.input.values(), "input");
    }
}

TEST(HeInit, SameSeedSameParams) {
    EXPECT_EQ(he_init<float>(NetSpec{}, 7), he_init<float>(NetSpec{}, 7));
    EXPECT_FALSE(he_init<float>(NetSpec{}, 7) == he_init<float>(NetSpec{}, 8));
}

TEST(HeInit, KernelVarianceAndBatchNormDefaults) {
    const auto p = he_init<double>(NetSpec{3, 16}, 5);
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
        const auto& t = p.tensors[i];
        switch (p.kinds[i]) {
            case ParamKind::Kernel: {
                const double fan_in = static_cast<double>(t.shape[1]) * t.shape[2] * t.shape[3];
                if (t.data.size() < 10000) break;
                double mean = 0.0;
                for (double v : t.data) mean += v;
                mean /= static_cast<double>(t.data.size());
                double var = 0.0;
                for (double v : t.data) var += (v - mean) * (v - mean);
                var /= static_cast<double>(t.data.size() - 1);
                EXPECT_NEAR(var, 2.0 / fan_in, 0.2 * 2.0 / fan_in) << t.name;
                break;
            }
            case ParamKind::Gamma:
            case ParamKind::RunningVar:
                for (double v : t.data) EXPECT_EQ(v, 1.0) << t.name;
                break;
            default:
                for (double v : t.data) EXPECT_EQ(v, 0.0) << t.name;
        }
    }
}

TEST(Unet, ChannelScheduleFollowsStages) {
    const NetSpec spec{3, 4};
    const auto p = NetworkParams<float>::zeros(spec);
    EXPECT_EQ(p[p.find("enc3.conv1.weight")].shape, (std::vector<int>{32, 32, 3, 3}));
    EXPECT_EQ(p[p.find("dec2.up.weight")].shape, (std::vector<int>{16, 32, 3, 3}));
    EXPECT_EQ(p[p.find("dec2.conv0.weight")].shape, (std::vector<int>{16, 32, 3, 3}));
    EXPECT_EQ(p[p.find("dec0.conv1.weight")].shape, (std::vector<int>{4, 4, 3, 3}));
    EXPECT_EQ(p[p.find("head.weight")].shape, (std::vector<int>{1, 4, 1, 1}));

    UnetCache<float> cache;
    unet_forward(Tensor4<float>(1, 1, 32, 32), he_init<float>(spec, 1), Mode::Train, &cache);
    const auto& bottleneck = cache.blocks[7];  // enc3.conv1 in execution order
    EXPECT_EQ(bottleneck.input.h(), 32 / spec.divisor());
    EXPECT_EQ(bottleneck.conv_out.c(), spec.channels(3));
}
