#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "itomo/io.hpp"
#include "itomo/pcg32.hpp"

using namespace itomo;

namespace {

TensorRecord random_record(DType dtype, std::vector<std::uint32_t> dims, std::uint64_t seed) {
    TensorRecord t{dtype, std::move(dims), {}};
    Pcg32 rng(seed);
    t.values.resize(t.numel());
    for (double& v : t.values) {
        v = rng.normal() * 1e3;
        if (dtype == DType::F32) v = static_cast<float>(v);
    }
    return t;
}

std::string serialize(const TensorRecord& t) {
    std::ostringstream os;
    write_tensor(os, t);
    return os.str();
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("itomo_test_io_" + name);
}

}  // namespace

TEST(TensorFile, RoundTripIsBitIdentical) {
    for (DType dtype : {DType::F32, DType::F64}) {
        TensorRecord t = random_record(dtype, {3, 4, 5}, 1);
        t.values[0] = -0.0;
        t.values[1] = std::numeric_limits<double>::infinity();
        std::stringstream ss;
        write_tensor(ss, t);
        EXPECT_EQ(read_tensor(ss), t);
    }
    const auto path = temp_path("tensor.itom");
    const TensorRecord t = random_record(DType::F64, {7, 2}, 2);
    write_tensor(path.string(), t);
    EXPECT_EQ(read_tensor(path.string()), t);
    std::filesystem::remove(path);
}

TEST(TensorFile, ScalarAndEmptyTensors) {
    for (const auto& t : {TensorRecord{DType::F64, {}, {3.5}}, TensorRecord{DType::F32, {0, 4}, {}}}) {
        std::stringstream ss;
        write_tensor(ss, t);
        EXPECT_EQ(read_tensor(ss), t);
    }
}

TEST(TensorFile, LittleEndianLayout) {
    const std::string bytes = serialize(TensorRecord{DType::F32, {2, 1}, {1.0, -2.0}});
    ASSERT_EQ(bytes.size(), 4u + 4u + 1u + 1u + 8u + 8u);
    EXPECT_EQ(bytes.substr(0, 4), "ITOM");
    const std::string expected_tail("\x01\x00\x00\x00"  // version
                                    "\x00"              // f32
                                    "\x02"              // rank
                                    "\x02\x00\x00\x00\x01\x00\x00\x00"
                                    "\x00\x00\x80\x3f"   // 1.0f
                                    "\x00\x00\x00\xc0",  // -2.0f
                                    22);
    EXPECT_EQ(bytes.substr(4), expected_tail);
}

TEST(TensorFile, FormatErrors) {
    std::string bytes = serialize(random_record(DType::F64, {4}, 3));
    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream bad_magic(bad);
    EXPECT_THROW(read_tensor(bad_magic), FormatError);

    std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(read_tensor(truncated), FormatError);

    std::string version = bytes;
    version[4] = 9;
    std::istringstream bad_version(version);
    EXPECT_THROW(read_tensor(bad_version), FormatError);

    std::string dtype = bytes;
    dtype[8] = 7;
    std::istringstream bad_dtype(dtype);
    EXPECT_THROW(read_tensor(bad_dtype), FormatError);

    EXPECT_THROW(read_tensor(temp_path("missing").string()), FormatError);
    EXPECT_THROW(write_tensor(std::cout, TensorRecord{DType::F64, {3}, {1.0}}), InvalidArgument);
}

TEST(TensorFile, ImageRoundTrip) {
    Image img = make_image(5);
    Pcg32 rng(4);
    for (double& v : img.values()) v = rng.uniform();
    const auto path = temp_path("image.itom");
    save_image(path.string(), img);
    EXPECT_EQ(load_image(path.string()), img);
    std::filesystem::remove(path);
    EXPECT_THROW(record_to_grid(TensorRecord{DType::F64, {4}, {1, 2, 3, 4}}), FormatError);
}

TEST(TensorFile, SinogramTruncationFlagIsRecovered) {
    const Geometry g = Geometry::desk(32);
    const Image f = rasterize(make_shepp_logan(), 32);
    const auto path = temp_path("sino.itom");
    save_sinogram(path.string(), truncate(radon_forward(f, g)));
    const Sinogram t = load_sinogram(path.string(), g);
    EXPECT_TRUE(t.truncated);
    save_sinogram(path.string(), radon_forward(f, g));
    EXPECT_FALSE(load_sinogram(path.string(), g).truncated);
    EXPECT_THROW(load_sinogram(path.string(), g.with_views(10)), FormatError);
    std::filesystem::remove(path);
}

TEST(Checkpoint, EmptyRoundTrips) {
    std::stringstream ss;
    write_checkpoint(ss, {});
    EXPECT_EQ(ss.str().size(), 12u);
    EXPECT_TRUE(read_checkpoint(ss).empty());
}

TEST(Checkpoint, EntriesRoundTripInOrder) {
    const std::vector<NamedTensor> entries{{"b", random_record(DType::F32, {2, 3}, 5)},
                                           {"a", random_record(DType::F64, {4}, 6)}};
    std::stringstream ss;
    write_checkpoint(ss, entries);
    EXPECT_EQ(read_checkpoint(ss), entries);
}

TEST(Checkpoint, DuplicateNamesAndCorruption) {
    const TensorRecord t{DType::F64, {1}, {1.0}};
    std::stringstream ss;
    EXPECT_THROW(write_checkpoint(ss, {{"x", t}, {"x", t}}), FormatError);

    // Hand-built file with a repeated name.
    std::ostringstream os;
    os.write("ITCK", 4);
    detail::put_le<std::uint32_t>(os, 1);
    detail::put_le<std::uint32_t>(os, 2);
    for (int i = 0; i < 2; ++i) {
        detail::put_le<std::uint16_t>(os, 1);
        os.write("x", 1);
        write_tensor(os, t);
    }
    std::istringstream dup(os.str());
    EXPECT_THROW(read_checkpoint(dup), FormatError);

    std::istringstream truncated(os.str().substr(0, 20));
    EXPECT_THROW(read_checkpoint(truncated), FormatError);
    std::istringstream wrong_magic(serialize(t));
    EXPECT_THROW(read_checkpoint(wrong_magic), FormatError);
}

TEST(Checkpoint, NetworkRoundTripIsBitExact) {
    auto p = nn::he_init<float>(nn::NetSpec{2, 3}, 8);
    p[p.find("enc1.conv0.bn.running_mean")].data[0] = 0.125f;
    const auto path = temp_path("net.itck");
    save_network(path.string(), p);
    const auto q = load_network(path.string());
    EXPECT_EQ(p, q);
    EXPECT_EQ(q.spec, p.spec);
    std::filesystem::remove(path);

    auto entries = network_entries(p);
    entries.pop_back();
    EXPECT_THROW(network_from_entries(entries), FormatError);
    entries = network_entries(p);
    entries.erase(entries.begin());
    EXPECT_THROW(network_from_entries(entries), FormatError);
    entries = network_entries(p);
    entries[1].tensor.dims[0] += 1;
    EXPECT_THROW(network_from_entries(entries), FormatError);
}

TEST(Pgm, WindowMapping) {
    EXPECT_EQ(pgm_level(0.2, 0.2, 0.8), 0);
    EXPECT_NEAR(pgm_level(0.5, 0.2, 0.8), 32768, 1);
    EXPECT_EQ(pgm_level(0.8, 0.2, 0.8), 65535);
    EXPECT_EQ(pgm_level(-5.0, 0.2, 0.8), 0);
    EXPECT_EQ(pgm_level(5.0, 0.2, 0.8), 65535);
}

TEST(Pgm, ConstantImageAtLowEndIsAllZero) {
    Image f = make_image(4);
    f.values()[0] = 0.0;
    std::ostringstream os;
    export_pgm(os, f, 0.0, 1.0);
    const std::string s = os.str();
    const std::string header = "P5\n4 4\n65535\n";
    ASSERT_EQ(s.size(), header.size() + 32);
    EXPECT_EQ(s.substr(0, header.size()), header);
    for (std::size_t i = header.size(); i < s.size(); ++i) EXPECT_EQ(s[i], '\0');
    EXPECT_THROW(export_pgm(os, f, 1.0, 1.0), InvalidArgument);
}

TEST(Pgm, SamplesAreBigEndian) {
    Image f = make_image(1);
    f(0, 0) = 1.0;
    std::ostringstream os;
    export_pgm(os, f, 0.0, 1.0);
    const std::string s = os.str();
    EXPECT_EQ(static_cast<unsigned char>(s[s.size() - 2]), 0xFF);
    EXPECT_EQ(static_cast<unsigned char>(s[s.size() - 1]), 0xFF);
}

TEST(Profile, CsvColumnsPerImage) {
    Image a = make_image(3);
    Image b = make_image(3);
    a(1, 2) = 0.5;
    b(1, 0) = 2.0;
    std::ostringstream os;
    write_profile_csv(os, {{"a", &a}, {"b", &b}}, 1);
    EXPECT_EQ(os.str(), "column,a,b\n0,0,2\n1,0,0\n2,0.5,0\n");
    EXPECT_THROW(write_profile_csv(os, {{"a", &a}}, 3), InvalidArgument);
}

TEST(Config, ParsesNestedSections) {
    const auto j = nlohmann::json::parse(R"({
        "image_n": 64, "roi_n": 32, "seed": 5,
        "geometry": {"views": 90, "detectors": 92, "kept": 44},
        "filter": "hann",
        "extrapolation": {"taper_width": 8},
        "phantom": {"ellipses": 3},
        "tv": {"lambda": 0.01, "max_iters": 10},
        "train": {"epochs": 3, "batch_size": 2, "stages": 2, "base_channels": 8, "loss": "sum"}
    })");
    const AppConfig c = config_from_json(j);
    EXPECT_EQ(c.image_n, 64);
    EXPECT_EQ(c.geometry.n_views, 90);
    EXPECT_EQ(c.geometry.n_det_kept, 44);
    EXPECT_EQ(c.filter, FilterKind::Hann);
    EXPECT_EQ(c.taper_width, 8);
    EXPECT_EQ(c.phantom_ellipses, 3);
    EXPECT_EQ(c.tv.lambda, 0.01);
    EXPECT_EQ(c.tv.max_iters, 10);
    EXPECT_EQ(c.train.epochs, 3);
    EXPECT_EQ(c.train.net.stages, 2);
    EXPECT_EQ(c.train.loss, LossReduction::Sum);
    EXPECT_EQ(c.train.seed, 5u);
    EXPECT_EQ(c.train.roi_n, 32);
    EXPECT_EQ(c.train.geometry, c.geometry);
}

TEST(Config, DeskPresetAndErrors) {
    EXPECT_EQ(config_from_json(nlohmann::json::parse(R"({"geometry": {"preset": "desk"}})")).geometry,
              Geometry::desk(128));
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"roi_n": 200})")), InvalidArgument);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"geometry": {"views": 3}})")), InvalidArgument);
    EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"filter": "box"})")), InvalidArgument);
    EXPECT_THROW(load_config(temp_path("no_config.json").string()), FormatError);
}

TEST(Config, DefaultConfigFileLoads) {
    const AppConfig c = load_config(ITOMO_CONFIG_DIR "/default.json");
    EXPECT_EQ(c.image_n, 128);
    EXPECT_EQ(c.roi_n, 64);
    EXPECT_EQ(c.geometry, Geometry::desk(128));
    EXPECT_EQ(c.train.lr_init, 1e-1);
    EXPECT_EQ(c.train.lr_final, 1e-3);
    EXPECT_EQ(c.train.batch_size, 2);
    EXPECT_EQ(c.tv.max_iters, 500);
}
