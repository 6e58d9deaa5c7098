#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "itomo/metrics.hpp"
#include "itomo/pcg32.hpp"

using namespace itomo;

namespace {

Image random_image(int n, std::uint64_t seed) {
    Pcg32 rng(seed);
    Image f = make_image(n);
    for (double& v : f.values()) v = rng.uniform(0.1, 1.0);
    return f;
}

}  // namespace

TEST(Psnr, IdenticalImagesHitCap) {
    const Image f = random_image(16, 1);
    EXPECT_EQ(psnr(f, f), 99.0);
    Image g = f;
    for (double& v : g.values()) v += 0.0;
    EXPECT_EQ(psnr(f, g), kPsnrCap);
}

TEST(Psnr, MseOfOneHundredthIsTwentyDecibels) {
    Image ref(4, 4, 0.5);
    Image test(4, 4, 0.6);
    EXPECT_NEAR(mse(ref, test), 0.01, 1e-15);
    EXPECT_NEAR(psnr(ref, test), 20.0, 1e-12);
}

TEST(Psnr, StrictlyDecreasingInMse) {
    const Image ref(8, 8, 0.0);
    double previous = kPsnrCap + 1.0;
    for (double e : {1e-4, 1e-3, 1e-2, 0.1, 0.5}) {
        const double p = psnr(ref, Image(8, 8, e));
        EXPECT_LT(p, previous);
        previous = p;
    }
}

TEST(Psnr, RejectsMismatchedShapesAndBadPeak) {
    EXPECT_THROW(psnr(Image(4, 4), Image(4, 5)), InvalidArgument);
    EXPECT_THROW(psnr(Image(4, 4), Image(4, 4), 0.0), InvalidArgument);
}

TEST(Nmse, Definitions) {
    const Image ref = random_image(16, 2);
    EXPECT_EQ(nmse(ref, ref), 0.0);
    EXPECT_NEAR(nmse(ref, Image(16, 16, 0.0)), 1.0, 1e-15);
    Image twice = ref;
    for (double& v : twice.values()) v *= 2.0;
    EXPECT_NEAR(nmse(ref, twice), 1.0, 1e-14);
}

TEST(Nmse, ScaledReferenceGivesSquaredOffset) {
    const Image ref = random_image(16, 3);
    for (double a : {-1.0, 0.0, 0.5, 1.0, 3.0}) {
        Image scaled = ref;
        for (double& v : scaled.values()) v *= a;
        EXPECT_NEAR(nmse(ref, scaled), (a - 1.0) * (a - 1.0), 1e-13);
    }
}

TEST(Nmse, RejectsZeroReference) { EXPECT_THROW(nmse(Image(4, 4, 0.0), Image(4, 4, 1.0)), InvalidArgument); }

TEST(Metrics, RankOrderAgreesBetweenPsnrAndNmse) {
    const Image ref = random_image(24, 4);
    std::vector<MetricReport> reports;
    for (double noise : {0.01, 0.05, 0.2, 0.4}) {
        Pcg32 rng(static_cast<std::uint64_t>(noise * 1000));
        Image test = ref;
        for (double& v : test.values()) v += noise * rng.normal();
        reports.push_back(evaluate(ref, test));
    }
    for (std::size_t i = 0; i < reports.size(); ++i) {
        for (std::size_t j = 0; j < reports.size(); ++j) {
            EXPECT_EQ(reports[i].psnr_db > reports[j].psnr_db, reports[i].nmse < reports[j].nmse);
        }
    }
}

TEST(Metrics, StripBorderAndCsv) {
    const Image f = random_image(10, 5);
    const Image inner = strip_border(f, 2);
    EXPECT_EQ(inner.rows(), 6);
    EXPECT_EQ(inner(0, 0), f(2, 2));
    std::ostringstream os;
    write_csv_header(os);
    write_csv_row(os, "same", evaluate(f, f));
    EXPECT_EQ(os.str(), "label,psnr_db,nmse,n_pixels\nsame,99,0,100\n");
}
