// Command-line front end for the interior tomography toolkit.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "itomo/itomo.hpp"

namespace fs = std::filesystem;
using namespace itomo;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;

    [[nodiscard]] AppConfig load() const {
        AppConfig c = config_path.empty() ? config_from_json(nlohmann::json::object()) : load_config(config_path);
        if (seed) set_seed(c, *seed);
        return c;
    }
};

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("-c,--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", common.seed, "Override the config seed");
}

std::ofstream open_text(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path + " for writing");
    os.precision(17);
    return os;
}

void maybe_pgm(const std::string& path, const Image& img, double lo, double hi) {
    if (!path.empty()) export_pgm(img, path, lo, hi);
}

Phantom load_phantom(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open phantom " + path);
    nlohmann::json j;
    is >> j;
    return j.get<Phantom>();
}

TensorRecord stack_record(const std::vector<Sample>& samples, bool inputs) {
    const Image& first = inputs ? samples.front().input : samples.front().target;
    TensorRecord r{DType::F64,
                   {static_cast<std::uint32_t>(samples.size()), static_cast<std::uint32_t>(first.rows()),
                    static_cast<std::uint32_t>(first.cols())},
                   {}};
    for (const auto& s : samples) {
        const Image& img = inputs ? s.input : s.target;
        r.values.insert(r.values.end(), img.values().begin(), img.values().end());
    }
    return r;
}

std::vector<Image> unstack_record(const TensorRecord& r) {
    if (r.dims.size() != 3) throw FormatError("dataset tensors must be rank 3");
    std::vector<Image> out;
    const std::size_t plane = static_cast<std::size_t>(r.dims[1]) * r.dims[2];
    for (std::uint32_t i = 0; i < r.dims[0]; ++i) {
        Image img(static_cast<int>(r.dims[1]), static_cast<int>(r.dims[2]));
        std::copy(r.values.begin() + static_cast<std::ptrdiff_t>(i * plane),
                  r.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane), img.values().begin());
        out.push_back(std::move(img));
    }
    return out;
}

void save_dataset(const fs::path& dir, const std::string& stem, const Dataset& d) {
    fs::create_directories(dir);
    write_tensor((dir / (stem + "_inputs.itom")).string(), stack_record(d.samples, true));
    write_tensor((dir / (stem + "_targets.itom")).string(), stack_record(d.samples, false));
}

Dataset load_dataset(const fs::path& dir, const std::string& stem) {
    auto inputs = unstack_record(read_tensor((dir / (stem + "_inputs.itom")).string()));
    auto targets = unstack_record(read_tensor((dir / (stem + "_targets.itom")).string()));
    if (inputs.size() != targets.size()) throw FormatError("dataset input/target counts differ");
    Dataset d;
    for (std::size_t i = 0; i < inputs.size(); ++i) d.samples.push_back({std::move(inputs[i]), std::move(targets[i])});
    return d;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    require(!out.empty(), "empty value list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interior tomography toolkit: phantoms, projection, FBP, TV and learned reconstruction"};
    app.require_subcommand(1);
    Common common;

    // phantom
    auto* phantom = app.add_subcommand("phantom", "Generate a phantom and rasterize it");
    add_common(phantom, common);
    bool shepp = false;
    std::string ph_json;
    std::string ph_image;
    std::string ph_pgm;
    int ph_ellipses = 0;
    phantom->add_flag("--shepp-logan", shepp, "Use the modified Shepp-Logan head instead of a random phantom");
    phantom->add_option("--ellipses", ph_ellipses, "Ellipse count of the random phantom (default from config)");
    phantom->add_option("--json", ph_json, "Write the ellipse list as JSON");
    phantom->add_option("-o,--out", ph_image, "Write the rasterized image (tensor file)");
    phantom->add_option("--pgm", ph_pgm, "Also export a PGM, window [0, 1]");

    // project
    auto* project = app.add_subcommand("project", "Forward-project an image or phantom");
    add_common(project, common);
    std::string pr_image;
    std::string pr_phantom;
    std::string pr_out;
    bool pr_analytic = false;
    project->add_option("--image", pr_image, "Image tensor file");
    project->add_option("--phantom", pr_phantom, "Phantom JSON (rasterized at image_n)");
    project->add_flag("--analytic", pr_analytic, "Use exact ellipse line integrals (needs --phantom)");
    project->add_option("-o,--out", pr_out, "Output sinogram")->required();

    // truncate
    auto* trunc = app.add_subcommand("truncate", "Zero detector columns outside the FOV window");
    add_common(trunc, common);
    std::string tr_in;
    std::string tr_out;
    trunc->add_option("-i,--in", tr_in, "Input sinogram")->required();
    trunc->add_option("-o,--out", tr_out, "Output sinogram")->required();

    // fbp
    auto* fbp = app.add_subcommand("fbp", "Filtered backprojection");
    add_common(fbp, common);
    std::string fb_in;
    std::string fb_out;
    std::string fb_pgm;
    bool fb_roi = false;
    fbp->add_option("-i,--in", fb_in, "Input sinogram")->required();
    fbp->add_option("-o,--out", fb_out, "Output image")->required();
    fbp->add_flag("--roi", fb_roi, "Crop to the configured ROI");
    fbp->add_option("--pgm", fb_pgm, "Also export a PGM, window [0, 1]");

    // extrapolate
    auto* extrap = app.add_subcommand("extrapolate", "Cosine-taper extrapolation of truncated data");
    add_common(extrap, common);
    std::string ex_in;
    std::string ex_out;
    std::optional<int> ex_taper;
    extrap->add_option("-i,--in", ex_in, "Truncated sinogram")->required();
    extrap->add_option("-o,--out", ex_out, "Extrapolated sinogram")->required();
    extrap->add_option("--taper", ex_taper, "Taper width in detector samples (default from config)");

    // nullspace-demo
    auto* nulldemo = app.add_subcommand("nullspace-demo", "Null-space function g and Hilbert diagnostics on a chord");
    add_common(nulldemo, common);
    std::string nd_csv;
    std::string nd_cup;
    double nd_sigma = 0.05;
    nulldemo->add_option("-o,--out", nd_csv, "CSV with u, psi, g, Hg")->required();
    nulldemo->add_option("--sigma", nd_sigma, "Width of the Gaussian seed");
    nulldemo->add_option("--cupping", nd_cup, "Also write the truncated-FBP ROI error image (tensor)");

    // tv
    auto* tv = app.add_subcommand("tv", "TV-regularized iterative reconstruction");
    add_common(tv, common);
    std::string tv_in;
    std::string tv_out;
    std::string tv_csv;
    std::string tv_sweep;
    tv->add_option("-i,--in", tv_in, "Input sinogram");
    tv->add_option("-o,--out", tv_out, "Output image (full grid)");
    tv->add_option("--objective", tv_csv, "Per-iteration objective CSV");
    tv->add_option("--sweep", tv_sweep, "Comma-separated lambdas: reconstruct a validation phantom and print ROI PSNR");

    // make-dataset
    auto* mkdata = app.add_subcommand("make-dataset", "Synthesize training and validation pairs");
    add_common(mkdata, common);
    std::string md_dir;
    mkdata->add_option("-o,--out", md_dir, "Output directory")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the U-Net on synthetic pairs");
    add_common(train_cmd, common);
    std::string tn_data;
    std::string tn_ckpt;
    std::string tn_hist;
    train_cmd->add_option("--dataset", tn_data, "Directory from make-dataset (generated when omitted)");
    train_cmd->add_option("-o,--out", tn_ckpt, "Checkpoint file")->required();
    train_cmd->add_option("--history", tn_hist, "Per-epoch history CSV");

    // infer
    auto* infer_cmd = app.add_subcommand("infer", "FBP, ROI crop and network on a truncated sinogram");
    add_common(infer_cmd, common);
    std::string in_ckpt;
    std::string in_sino;
    std::string in_out;
    std::string in_pgm;
    infer_cmd->add_option("--checkpoint", in_ckpt, "Checkpoint file")->required();
    infer_cmd->add_option("-i,--in", in_sino, "Truncated sinogram")->required();
    infer_cmd->add_option("-o,--out", in_out, "Output ROI image")->required();
    infer_cmd->add_option("--pgm", in_pgm, "Also export a PGM, window [0, 1]");

    // eval
    auto* eval = app.add_subcommand("eval", "PSNR/NMSE table and cut profiles against a reference");
    add_common(eval, common);
    std::string ev_ref;
    std::vector<std::string> ev_tests;
    std::string ev_csv;
    std::string ev_profile;
    std::optional<int> ev_row;
    bool ev_crop = false;
    eval->add_option("--ref", ev_ref, "Reference image")->required();
    eval->add_option("--test", ev_tests, "Images to score, optionally label=path")->required();
    eval->add_flag("--crop-ref", ev_crop, "Crop the reference to the configured ROI first");
    eval->add_option("-o,--out", ev_csv, "Metrics CSV (stdout when omitted)");
    eval->add_option("--profile", ev_profile, "Cut-profile CSV along one row");
    eval->add_option("--row", ev_row, "Profile row (default: middle)");

    // bench
    auto* bench = app.add_subcommand("bench", "Wall-clock table for FBP, TV and network inference");
    add_common(bench, common);
    std::string bn_ckpt;
    int bn_slices = 3;
    bench->add_option("--checkpoint", bn_ckpt, "Checkpoint (freshly initialized network when omitted)");
    bench->add_option("--slices", bn_slices, "Number of phantoms to time")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const AppConfig cfg = common.load();
        const int n = cfg.image_n;

        if (phantom->parsed()) {
            const Phantom p = shepp ? make_shepp_logan()
                                    : make_random_phantom(cfg.seed, ph_ellipses > 0 ? ph_ellipses : cfg.phantom_ellipses);
            if (!ph_json.empty()) {
                open_text(ph_json) << nlohmann::json(p).dump(2) << '\n';
            }
            const Image img = rasterize(p, n);
            if (!ph_image.empty()) save_image(ph_image, img);
            maybe_pgm(ph_pgm, img, 0.0, 1.0);
            if (ph_json.empty() && ph_image.empty() && ph_pgm.empty()) std::cout << nlohmann::json(p).dump(2) << '\n';
        } else if (project->parsed()) {
            require(pr_image.empty() != pr_phantom.empty(), "project needs exactly one of --image or --phantom");
            Sinogram y;
            if (pr_analytic) {
                require(!pr_phantom.empty(), "--analytic needs --phantom");
                y = analytic_sinogram(load_phantom(pr_phantom), cfg.geometry);
            } else {
                const Image img = pr_image.empty() ? rasterize(load_phantom(pr_phantom), n) : load_image(pr_image);
                y = radon_forward(img, cfg.geometry);
            }
            save_sinogram(pr_out, y);
        } else if (trunc->parsed()) {
            save_sinogram(tr_out, truncate(load_sinogram(tr_in, cfg.geometry)));
        } else if (fbp->parsed()) {
            const Sinogram y = load_sinogram(fb_in, cfg.geometry);
            Image img = fbp_reconstruct(y, FilterSpec::for_detectors(cfg.geometry.n_det, cfg.filter), n);
            if (fb_roi) img = crop_roi(img, cfg.roi_n);
            save_image(fb_out, img);
            maybe_pgm(fb_pgm, img, 0.0, 1.0);
        } else if (extrap->parsed()) {
            Sinogram y = load_sinogram(ex_in, cfg.geometry);
            require(y.truncated, "extrapolate needs truncated data (all columns outside the window zero)");
            save_sinogram(ex_out, extrapolate_sinogram(y, ex_taper.value_or(cfg.taper_width)));
        } else if (nulldemo->parsed()) {
            const ChordLine chord = ChordLine::make(0.0, cfg.geometry.mu(), 1.0, 2 * n + 1);
            const NullSeed seed = gaussian_seed(chord, 0.5 * (chord.mu_v() + chord.half_length), nd_sigma, 1.0);
            const std::vector<double> g = nullspace_sample(chord, seed);
            const std::vector<double> hg = discrete_hilbert(g);
            auto os = open_text(nd_csv);
            os << "u,psi,g,hilbert_g,inside\n";
            double worst = 0.0;
            double psi_max = 0.0;
            for (int i = 0; i < chord.n_samples; ++i) {
                const auto k = static_cast<std::size_t>(i);
                const bool inside = chord.in_interval(i);
                os << chord.u(i) << ',' << seed.psi[k] << ',' << g[k] << ',' << hg[k] << ',' << inside << '\n';
                psi_max = std::max(psi_max, std::abs(seed.psi[k]));
                if (std::abs(chord.u(i)) <= 0.9 * chord.mu_v()) worst = std::max(worst, std::abs(hg[k] + seed.psi[k]));
            }
            std::cout << "mu " << chord.mu_v() << "  max |Hg + psi| on inner 90% " << worst << "  (|psi|max "
                      << psi_max << ")\n";
            if (!nd_cup.empty()) {
                const Phantom p = make_random_phantom(cfg.seed, cfg.phantom_ellipses);
                const auto [recon, err] = make_cupping_image(rasterize(p, n), cfg.geometry,
                                                             FilterSpec::for_detectors(cfg.geometry.n_det, cfg.filter),
                                                             cfg.roi_n);
                save_image(nd_cup, err);
                std::cout << "error energy below Nyquist/4: " << spectral_energy_fraction(err, 0.25) << '\n';
            }
        } else if (tv->parsed()) {
            if (!tv_sweep.empty()) {
                const Phantom p = make_random_phantom(cfg.seed, cfg.phantom_ellipses);
                const Image truth = rasterize(p, n);
                const Sinogram y = radon_forward_truncated(truth, cfg.geometry);
                const Image roi_truth = crop_roi(truth, cfg.roi_n);
                std::cout << "lambda,roi_psnr_db,iterations\n";
                for (double lambda : parse_list(tv_sweep)) {
                    TvConfig t = cfg.tv;
                    t.lambda = lambda;
                    const TvResult r = tv_reconstruct_detailed(y, t, n);
                    std::cout << lambda << ',' << psnr(roi_truth, crop_roi(r.image, cfg.roi_n)) << ',' << r.iterations
                              << '\n';
                }
            } else {
                require(!tv_in.empty() && !tv_out.empty(), "tv needs --in and --out (or --sweep)");
                const TvResult r = tv_reconstruct_detailed(load_sinogram(tv_in, cfg.geometry), cfg.tv, n);
                save_image(tv_out, r.image);
                if (!tv_csv.empty()) {
                    auto os = open_text(tv_csv);
                    write_objective_csv(os, r.objective);
                }
            }
        } else if (mkdata->parsed()) {
            save_dataset(md_dir, "train", make_dataset(cfg.train));
            if (cfg.train.n_val > 0) save_dataset(md_dir, "val", make_validation_set(cfg.train));
        } else if (train_cmd->parsed()) {
            Dataset data;
            Dataset val;
            if (tn_data.empty()) {
                data = make_dataset(cfg.train);
                if (cfg.train.n_val > 0) val = make_validation_set(cfg.train);
            } else {
                data = load_dataset(tn_data, "train");
                if (fs::exists(fs::path(tn_data) / "val_inputs.itom")) val = load_dataset(tn_data, "val");
            }
            std::ofstream hist;
            if (!tn_hist.empty()) {
                hist = open_text(tn_hist);
                hist << "epoch,learning_rate,train_loss,val_psnr_db\n";
            }
            const TrainResult res = train(cfg.train, data, val.samples.empty() ? nullptr : &val,
                                          [&](const EpochRecord& r) {
                                              std::cerr << "epoch " << r.epoch << "  lr " << r.learning_rate
                                                        << "  loss " << r.train_loss << "  val " << r.val_psnr
                                                        << " dB\n";
                                              if (hist.is_open()) {
                                                  hist << r.epoch << ',' << r.learning_rate << ',' << r.train_loss
                                                       << ',' << r.val_psnr << '\n';
                                              }
                                          });
            save_network(tn_ckpt, res.params);
        } else if (infer_cmd->parsed()) {
            const auto params = load_network(in_ckpt);
            const Image out = infer(params, load_sinogram(in_sino, cfg.geometry), cfg.train);
            save_image(in_out, out);
            maybe_pgm(in_pgm, out, 0.0, 1.0);
        } else if (eval->parsed()) {
            Image ref = load_image(ev_ref);
            if (ev_crop) ref = crop_roi(ref, cfg.roi_n);
            std::vector<std::pair<std::string, Image>> tests;
            for (const auto& t : ev_tests) {
                const auto eq = t.find('=');
                const std::string label = eq == std::string::npos ? fs::path(t).stem().string() : t.substr(0, eq);
                tests.emplace_back(label, load_image(eq == std::string::npos ? t : t.substr(eq + 1)));
            }
            std::ofstream file;
            if (!ev_csv.empty()) file = open_text(ev_csv);
            std::ostream& os = ev_csv.empty() ? std::cout : file;
            write_csv_header(os);
            for (const auto& [label, img] : tests) write_csv_row(os, label, evaluate(ref, img));
            if (!ev_profile.empty()) {
                std::vector<std::pair<std::string, const Image*>> rows{{"reference", &ref}};
                for (const auto& [label, img] : tests) rows.emplace_back(label, &img);
                auto ps = open_text(ev_profile);
                write_profile_csv(ps, rows, ev_row.value_or(ref.rows() / 2));
            }
        } else if (bench->parsed()) {
            const auto params =
                bn_ckpt.empty() ? nn::he_init<float>(cfg.train.net, cfg.seed) : load_network(bn_ckpt);
            const FilterSpec spec = FilterSpec::for_detectors(cfg.geometry.n_det, cfg.filter);
            double t_fbp = 0.0;
            double t_tv = 0.0;
            double t_net = 0.0;
            for (int i = 0; i < bn_slices; ++i) {
                const Phantom p = make_random_phantom(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)),
                                                      cfg.phantom_ellipses);
                const Sinogram y = radon_forward_truncated(rasterize(p, n), cfg.geometry);
                auto t0 = std::chrono::steady_clock::now();
                const Image recon = fbp_reconstruct(y, spec, n);
                t_fbp += seconds_since(t0);
                t0 = std::chrono::steady_clock::now();
                (void)tv_reconstruct(y, cfg.tv, n);
                t_tv += seconds_since(t0);
                t0 = std::chrono::steady_clock::now();
                (void)infer(params, y, cfg.train);
                t_net += seconds_since(t0);
            }
            std::cout << "method,mean_seconds\n" << std::setprecision(6);
            std::cout << "fbp," << t_fbp / bn_slices << '\n';
            std::cout << "tv," << t_tv / bn_slices << '\n';
            std::cout << "network," << t_net / bn_slices << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
