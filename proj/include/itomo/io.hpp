#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "itomo/fbp.hpp"
#include "itomo/geometry.hpp"
#include "itomo/grid.hpp"
#include "itomo/nn/unet.hpp"
#include "itomo/trainer.hpp"
#include "itomo/tv.hpp"

namespace itomo {

// ---------------------------------------------------------------------------
// Little-endian primitives
// ---------------------------------------------------------------------------

namespace detail {

template <typename U>
void put_le(std::ostream& os, U v) {
    std::array<char, sizeof(U)> bytes{};
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFFU);
    os.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& is, const char* what) {
    std::array<unsigned char, sizeof(U)> bytes{};
    is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!is) throw FormatError(std::string("truncated input while reading ") + what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
    return v;
}

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
    std::array<char, 4> got{};
    is.read(got.data(), 4);
    if (!is) throw FormatError("truncated input while reading magic");
    if (std::memcmp(got.data(), magic, 4) != 0) {
        throw FormatError(std::string("bad magic: expected ") + magic + ", got '" + std::string(got.data(), 4) + "'");
    }
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    return is;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tensor files: "ITOM", version u32, dtype u8 (0 f32, 1 f64), rank u8,
// dims u32[rank], row-major payload. All little-endian.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

/// f32 payloads are held widened to double, which is exact both ways.
struct TensorRecord {
    DType dtype{DType::F64};
    std::vector<std::uint32_t> dims;
    std::vector<double> values;

    [[nodiscard]] std::size_t numel() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }

    friend bool operator==(const TensorRecord& a, const TensorRecord& b) {
        if (a.dtype != b.dtype || a.dims != b.dims || a.values.size() != b.values.size()) return false;
        // Bitwise comparison, so NaN payloads and signed zeros count.
        return std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0;
    }
};

inline void write_tensor(std::ostream& os, const TensorRecord& t) {
    require(t.dims.size() <= 255, "tensor rank must be <= 255");
    require(t.values.size() == t.numel(), "tensor payload does not match its dims");
    os.write("ITOM", 4);
    detail::put_le<std::uint32_t>(os, kTensorVersion);
    detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dtype));
    detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) detail::put_le<std::uint32_t>(os, d);
    for (double v : t.values) {
        if (t.dtype == DType::F32) {
            detail::put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        } else {
            detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
        }
    }
    if (!os) throw FormatError("write failed");
}

inline TensorRecord read_tensor(std::istream& is) {
    detail::expect_magic(is, "ITOM");
    const auto version = detail::get_le<std::uint32_t>(is, "version");
    if (version != kTensorVersion) throw FormatError("unsupported tensor version " + std::to_string(version));
    const auto dtype = detail::get_le<std::uint8_t>(is, "dtype");
    if (dtype > 1) throw FormatError("unknown dtype " + std::to_string(dtype));
    TensorRecord t;
    t.dtype = static_cast<DType>(dtype);
    const auto rank = detail::get_le<std::uint8_t>(is, "rank");
    for (int i = 0; i < rank; ++i) t.dims.push_back(detail::get_le<std::uint32_t>(is, "dims"));
    const std::size_t n = t.numel();
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (t.dtype == DType::F32) {
            t.values[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(is, "payload"));
        } else {
            t.values[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(is, "payload"));
        }
    }
    return t;
}

inline void write_tensor(const std::string& path, const TensorRecord& t) {
    auto os = detail::open_out(path);
    write_tensor(os, t);
}

inline TensorRecord read_tensor(const std::string& path) {
    auto is = detail::open_in(path);
    return read_tensor(is);
}

inline TensorRecord image_record(const Grid2<double>& img) {
    return TensorRecord{DType::F64, {static_cast<std::uint32_t>(img.rows()), static_cast<std::uint32_t>(img.cols())},
                        std::vector<double>(img.values().begin(), img.values().end())};
}

inline Grid2<double> record_to_grid(const TensorRecord& t) {
    if (t.dims.size() != 2) throw FormatError("expected a rank-2 tensor, got rank " + std::to_string(t.dims.size()));
    Grid2<double> g(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]));
    std::copy(t.values.begin(), t.values.end(), g.values().begin());
    return g;
}

inline void save_image(const std::string& path, const Image& img) { write_tensor(path, image_record(img)); }

inline Image load_image(const std::string& path) { return record_to_grid(read_tensor(path)); }

inline void save_sinogram(const std::string& path, const Sinogram& y) { write_tensor(path, image_record(y.data)); }

/// Sinogram files carry only the data; the geometry comes from the config. Data
/// from a truncating geometry whose outside columns are all zero is flagged truncated.
inline Sinogram load_sinogram(const std::string& path, const Geometry& g) {
    Sinogram y{record_to_grid(read_tensor(path)), g, false};
    if (y.data.rows() != g.n_views || y.data.cols() != g.n_det) {
        throw FormatError("sinogram " + path + " is " + std::to_string(y.data.rows()) + "x" +
                          std::to_string(y.data.cols()) + " but the geometry expects " + std::to_string(g.n_views) +
                          "x" + std::to_string(g.n_det));
    }
    if (g.is_truncating()) {
        bool outside_zero = true;
        for (int k = 0; k < g.n_views && outside_zero; ++k) {
            for (int m = 0; m < g.n_det; ++m) {
                if ((m < g.kept_begin() || m >= g.kept_end()) && y.data(k, m) != 0.0) {
                    outside_zero = false;
                    break;
                }
            }
        }
        y.truncated = outside_zero;
    }
    return y;
}

// ---------------------------------------------------------------------------
// Checkpoints: "ITCK", version u32, count u32, then per entry name_len u16,
// utf-8 name and a complete tensor record.
// ---------------------------------------------------------------------------

struct NamedTensor {
    std::string name;
    TensorRecord tensor;

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

inline void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& entries) {
    std::set<std::string> names;
    for (const auto& e : entries) {
        require(!e.name.empty() && e.name.size() <= 0xFFFF, "checkpoint entry names must have 1..65535 bytes");
        if (!names.insert(e.name).second) throw FormatError("duplicate checkpoint entry '" + e.name + "'");
    }
    os.write("ITCK", 4);
    detail::put_le<std::uint32_t>(os, kCheckpointVersion);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        detail::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_tensor(os, e.tensor);
    }
    if (!os) throw FormatError("write failed");
}

inline std::vector<NamedTensor> read_checkpoint(std::istream& is) {
    detail::expect_magic(is, "ITCK");
    const auto version = detail::get_le<std::uint32_t>(is, "version");
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto count = detail::get_le<std::uint32_t>(is, "count");
    std::vector<NamedTensor> entries;
    std::set<std::string> names;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = detail::get_le<std::uint16_t>(is, "name length");
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (!is) throw FormatError("truncated input while reading entry name");
        if (!names.insert(name).second) throw FormatError("duplicate checkpoint entry '" + name + "'");
        entries.push_back(NamedTensor{std::move(name), read_tensor(is)});
    }
    return entries;
}

inline void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& entries) {
    auto os = detail::open_out(path);
    write_checkpoint(os, entries);
}

inline std::vector<NamedTensor> read_checkpoint(const std::string& path) {
    auto is = detail::open_in(path);
    return read_checkpoint(is);
}

inline constexpr const char* kNetSpecEntry = "net.spec";

/// Network checkpoint: a "net.spec" entry (stages, base_channels) followed by
/// every parameter tensor in layout order.
inline std::vector<NamedTensor> network_entries(const nn::NetworkParams<float>& p) {
    std::vector<NamedTensor> entries;
    entries.push_back({kNetSpecEntry, TensorRecord{DType::F64, {2},
                                                   {static_cast<double>(p.spec.stages),
                                                    static_cast<double>(p.spec.base_channels)}}});
    for (const auto& t : p.tensors) {
        TensorRecord r{DType::F32, {}, std::vector<double>(t.data.begin(), t.data.end())};
        for (int d : t.shape) r.dims.push_back(static_cast<std::uint32_t>(d));
        entries.push_back({t.name, std::move(r)});
    }
    return entries;
}

inline nn::NetworkParams<float> network_from_entries(const std::vector<NamedTensor>& entries) {
    auto spec_it = std::find_if(entries.begin(), entries.end(), [](const auto& e) { return e.name == kNetSpecEntry; });
    if (spec_it == entries.end() || spec_it->tensor.values.size() != 2) {
        throw FormatError("checkpoint has no valid net.spec entry");
    }
    nn::NetSpec spec;
    spec.stages = static_cast<int>(spec_it->tensor.values[0]);
    spec.base_channels = static_cast<int>(spec_it->tensor.values[1]);
    auto p = nn::NetworkParams<float>::zeros(spec);
    if (entries.size() != p.tensors.size() + 1) throw FormatError("checkpoint entry count does not match net.spec");
    for (const auto& e : entries) {
        if (e.name == kNetSpecEntry) continue;
        const int idx = p.find(e.name);
        if (idx < 0) throw FormatError("unexpected checkpoint entry '" + e.name + "'");
        auto& t = p[idx];
        std::vector<std::uint32_t> dims;
        for (int d : t.shape) dims.push_back(static_cast<std::uint32_t>(d));
        if (e.tensor.dims != dims || e.tensor.dtype != DType::F32) {
            throw FormatError("checkpoint entry '" + e.name + "' has the wrong shape or dtype");
        }
        std::transform(e.tensor.values.begin(), e.tensor.values.end(), t.data.begin(),
                       [](double v) { return static_cast<float>(v); });
    }
    p.validate();
    return p;
}

inline void save_network(const std::string& path, const nn::NetworkParams<float>& p) {
    write_checkpoint(path, network_entries(p));
}

inline nn::NetworkParams<float> load_network(const std::string& path) {
    return network_from_entries(read_checkpoint(path));
}

// ---------------------------------------------------------------------------
// 16-bit binary PGM
// ---------------------------------------------------------------------------

/// Maps [lo, hi] linearly onto [0, 65535], clamping outside values.
inline std::uint16_t pgm_level(double v, double lo, double hi) {
    const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    return static_cast<std::uint16_t>(std::lround(t * 65535.0));
}

inline void export_pgm(std::ostream& os, const Image& f, double lo, double hi) {
    require(lo < hi, "export_pgm: window needs lo < hi");
    os << "P5\n" << f.cols() << ' ' << f.rows() << "\n65535\n";
    for (double v : f.values()) {
        const std::uint16_t level = pgm_level(v, lo, hi);
        // PGM stores 16-bit samples most significant byte first.
        const std::array<char, 2> bytes{static_cast<char>(level >> 8U), static_cast<char>(level & 0xFFU)};
        os.write(bytes.data(), 2);
    }
    if (!os) throw FormatError("write failed");
}

inline void export_pgm(const Image& f, const std::string& path, double lo, double hi) {
    auto os = detail::open_out(path);
    export_pgm(os, f, lo, hi);
}

/// One row of pixel values per image, for cut-view plots.
inline void write_profile_csv(std::ostream& os, const std::vector<std::pair<std::string, const Image*>>& images,
                              int row) {
    require(!images.empty(), "profile: no images");
    const int cols = images.front().second->cols();
    os << "column";
    for (const auto& [label, img] : images) {
        require(img->cols() == cols && row >= 0 && row < img->rows(), "profile: row or size mismatch for " + label);
        os << ',' << label;
    }
    os << '\n';
    os.precision(17);
    for (int j = 0; j < cols; ++j) {
        os << j;
        for (const auto& entry : images) os << ',' << (*entry.second)(row, j);
        os << '\n';
    }
}

// ---------------------------------------------------------------------------
// JSON configuration
// ---------------------------------------------------------------------------

struct AppConfig {
    int image_n{128};
    int roi_n{64};
    std::uint64_t seed{2017};
    Geometry geometry{Geometry::desk(128)};
    FilterKind filter{FilterKind::RamLak};
    int taper_width{16};
    int phantom_ellipses{6};
    TvConfig tv{};
    TrainConfig train{};

    void validate() const {
        geometry.validate();
        require(roi_n >= 1 && roi_n <= image_n, "config: roi_n must be in [1, image_n]");
        require(taper_width >= 1, "config: taper_width must be >= 1");
        tv.validate();
        train.validate();
    }
};

/// Geometry object: {"preset": "desk"} scales with image_n; otherwise "views",
/// "detectors", "kept" and optionally "pitch" (default 2*sqrt(2)/detectors).
inline Geometry geometry_from_json(const nlohmann::json& j, int image_n) {
    if (j.value("preset", std::string{}) == "desk") return Geometry::desk(image_n);
    require(j.contains("views") && j.contains("detectors") && j.contains("kept"),
            "geometry needs \"preset\": \"desk\" or views/detectors/kept");
    const int views = j.at("views").get<int>();
    const int det = j.at("detectors").get<int>();
    const int kept = j.at("kept").get<int>();
    if (j.contains("pitch")) return Geometry::parallel(views, det, j.at("pitch").get<double>(), kept);
    return Geometry::parallel(views, det, kept);
}

inline AppConfig config_from_json(const nlohmann::json& j) {
    AppConfig c;
    c.image_n = j.value("image_n", c.image_n);
    c.roi_n = j.value("roi_n", c.roi_n);
    c.seed = j.value("seed", c.seed);
    c.geometry = j.contains("geometry") ? geometry_from_json(j.at("geometry"), c.image_n) : Geometry::desk(c.image_n);
    if (j.contains("filter")) c.filter = filter_kind_from_string(j.at("filter").get<std::string>());
    if (j.contains("extrapolation")) c.taper_width = j.at("extrapolation").value("taper_width", c.taper_width);
    if (j.contains("phantom")) c.phantom_ellipses = j.at("phantom").value("ellipses", c.phantom_ellipses);
    if (j.contains("tv")) {
        const auto& t = j.at("tv");
        c.tv.lambda = t.value("lambda", c.tv.lambda);
        c.tv.epsilon = t.value("epsilon", c.tv.epsilon);
        c.tv.max_iters = t.value("max_iters", c.tv.max_iters);
        c.tv.step = t.value("step", c.tv.step);
        c.tv.tol = t.value("tol", c.tv.tol);
        c.tv.power_iters = t.value("power_iters", c.tv.power_iters);
    }
    TrainConfig& tr = c.train;
    if (j.contains("train")) {
        const auto& t = j.at("train");
        tr.epochs = t.value("epochs", tr.epochs);
        tr.batch_size = t.value("batch_size", tr.batch_size);
        tr.lr_init = t.value("lr_init", tr.lr_init);
        tr.lr_final = t.value("lr_final", tr.lr_final);
        tr.weight_decay = t.value("weight_decay", tr.weight_decay);
        tr.momentum = t.value("momentum", tr.momentum);
        if (t.contains("loss")) tr.loss = loss_reduction_from_string(t.at("loss").get<std::string>());
        tr.n_train = t.value("n_train", tr.n_train);
        tr.n_val = t.value("n_val", tr.n_val);
        tr.min_ellipses = t.value("min_ellipses", tr.min_ellipses);
        tr.max_ellipses = t.value("max_ellipses", tr.max_ellipses);
        tr.net.stages = t.value("stages", tr.net.stages);
        tr.net.base_channels = t.value("base_channels", tr.net.base_channels);
    }
    tr.seed = c.seed;
    tr.image_n = c.image_n;
    tr.roi_n = c.roi_n;
    tr.geometry = c.geometry;
    tr.filter = c.filter;
    c.validate();
    return c;
}

inline AppConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open config " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("config " + path + ": " + e.what());
    }
    return config_from_json(j);
}

/// Re-seeds a config, keeping the trainer seed in sync.
inline void set_seed(AppConfig& c, std::uint64_t seed) {
    c.seed = seed;
    c.train.seed = seed;
}

}  // namespace itomo
