#include <gtest/gtest.h>

#include <cmath>

#include "itomo/fbp.hpp"
#include "itomo/metrics.hpp"
#include "itomo/pcg32.hpp"
#include "itomo/phantom.hpp"
#include "itomo/tv.hpp"

using namespace itomo;

namespace {

Image random_image(int n, std::uint64_t seed) {
    Pcg32 rng(seed);
    Image f = make_image(n);
    for (double& v : f.values()) v = rng.uniform(-1.0, 1.0);
    return f;
}

}  // namespace

TEST(TvValue, ConstantImageIsZero) { EXPECT_EQ(tv_value(Image(12, 12, 3.0), 0.0), 0.0); }

TEST(TvValue, HalfPlaneStepCountsOneJumpPerRow) {
    Image f(64, 64, 0.0);
    for (int i = 0; i < 64; ++i) {
        for (int j = 32; j < 64; ++j) f(i, j) = 1.0;
    }
    EXPECT_DOUBLE_EQ(tv_value(f, 0.0), 64.0);
}

TEST(TvValue, PositivelyHomogeneous) {
    const Image f = random_image(20, 1);
    Image f2 = f;
    for (double& v : f2.values()) v *= 2.0;
    EXPECT_NEAR(tv_value(f2, 0.0), 2.0 * tv_value(f, 0.0), 1e-12 * tv_value(f, 0.0));
}

TEST(TvGradient, ConstantImageHasZeroGradient) {
    const Image g = tv_gradient(Image(10, 10, -2.0), 0.1);
    for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(TvGradient, MatchesCentralDifferences) {
    const double eps = 0.05;
    Image f = random_image(16, 2);
    const Image g = tv_gradient(f, eps);
    const double h = 1e-6;
    double err = 0.0;
    double ref = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double orig = f.values()[i];
        f.values()[i] = orig + h;
        const double up = tv_value(f, eps);
        f.values()[i] = orig - h;
        const double down = tv_value(f, eps);
        f.values()[i] = orig;
        const double fd = (up - down) / (2.0 * h);
        err += (fd - g.values()[i]) * (fd - g.values()[i]);
        ref += fd * fd;
    }
    EXPECT_LT(std::sqrt(err / ref), 1e-6);
}

TEST(TvGradient, ShiftInvariant) {
    const Image f = random_image(16, 3);
    Image shifted = f;
    for (double& v : shifted.values()) v += 0.75;
    const Image a = tv_gradient(f, 0.01);
    const Image b = tv_gradient(shifted, 0.01);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-9);
}

TEST(TvConfig, RejectsNonPositiveParameters) {
    TvConfig c;
    c.lambda = 0.0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = TvConfig{};
    c.max_iters = 0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = TvConfig{};
    c.epsilon = -1.0;
    EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(TvReconstruct, ZeroDataGivesZeroImage) {
    Sinogram y = Sinogram::zeros(Geometry::desk(32));
    y.truncated = true;
    TvConfig cfg;
    cfg.max_iters = 20;
    const Image f = tv_reconstruct(y, cfg, 32);
    for (double v : f.values()) EXPECT_EQ(v, 0.0);
}

TEST(TvReconstruct, ObjectiveNeverIncreasesAndIsDeterministic) {
    const int n = 64;
    const Geometry g = Geometry::desk(n);
    const Sinogram y = radon_forward_truncated(rasterize(make_random_phantom(5, 6), n), g);
    TvConfig cfg;
    cfg.max_iters = 60;
    const TvResult a = tv_reconstruct_detailed(y, cfg, n);
    for (std::size_t i = 1; i < a.objective.size(); ++i) EXPECT_LE(a.objective[i], a.objective[i - 1]) << i;
    EXPECT_EQ(a.image, tv_reconstruct(y, cfg, n));
    EXPECT_NEAR(a.step, 0.9 / a.lipschitz, 1e-15);
}

TEST(TvReconstruct, OversizedStepIsReportedAsDivergence) {
    const int n = 32;
    const Geometry g = Geometry::desk(n);
    const Sinogram y = radon_forward_truncated(rasterize(make_shepp_logan(), n), g);
    TvConfig cfg;
    cfg.step = 100.0;
    cfg.max_iters = 50;
    EXPECT_THROW(tv_reconstruct(y, cfg, n), DivergenceError);
}

TEST(TvReconstruct, BeatsTruncatedFbpOnDiskByTenDecibels) {
    const int n = 128;
    const Geometry g = Geometry::desk(n);
    const Image truth = rasterize(Phantom{{Ellipse{0.0, 0.0, 0.9, 0.9, 0.0, 1.0}}, 0}, n);
    const Sinogram y = radon_forward_truncated(truth, g);
    TvConfig cfg;
    cfg.lambda = 1e-4;
    cfg.max_iters = 200;
    const int roi = n / 2;
    const double fbp = psnr(crop_roi(truth, roi), crop_roi(fbp_reconstruct(y, n), roi));
    const double tv = psnr(crop_roi(truth, roi), crop_roi(tv_reconstruct(y, cfg, n), roi));
    EXPECT_GE(tv, fbp + 10.0);
}

TEST(TvReconstruct, FullDataSmallLambdaApproachesFbp) {
    const int n = 128;
    const Geometry g = Geometry::desk(n).untruncated();
    const Image truth = rasterize(make_shepp_logan(), n);
    const Sinogram y = radon_forward(truth, g);
    TvConfig cfg;
    cfg.lambda = 1e-6;
    cfg.max_iters = 300;
    const double fbp = psnr(truth, fbp_reconstruct(y, n));
    const double tv = psnr(truth, tv_reconstruct(y, cfg, n));
    EXPECT_GE(tv, fbp - 1.0);
}

TEST(TvReconstruct, ObjectiveCsv) {
    std::ostringstream os;
    write_objective_csv(os, {3.0, 2.0});
    EXPECT_EQ(os.str(), "iteration,objective\n0,3\n1,2\n");
}
