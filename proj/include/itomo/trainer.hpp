#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "itomo/fbp.hpp"
#include "itomo/geometry.hpp"
#include "itomo/metrics.hpp"
#include "itomo/nn/unet.hpp"
#include "itomo/pcg32.hpp"
#include "itomo/phantom.hpp"
#include "itomo/projector.hpp"

namespace itomo {

/// Per-sample loss: squared error summed over pixels (Sum) or averaged (Mean);
/// either way averaged over the minibatch.
enum class LossReduction { Sum, Mean };

inline std::string to_string(LossReduction r) { return r == LossReduction::Sum ? "sum" : "mean"; }

inline LossReduction loss_reduction_from_string(const std::string& s) {
    if (s == "sum") return LossReduction::Sum;
    if (s == "mean") return LossReduction::Mean;
    throw InvalidArgument("unknown loss reduction '" + s + "' (expected sum or mean)");
}

struct TrainConfig {
    int epochs{60};
    int batch_size{2};
    double lr_init{1e-3};
    double lr_final{1e-5};
    double weight_decay{1e-4};
    double momentum{0.9};
    LossReduction loss{LossReduction::Mean};
    std::uint64_t seed{2017};
    int n_train{300};
    int n_val{20};
    int image_n{128};
    int roi_n{64};
    int min_ellipses{4};
    int max_ellipses{10};
    Geometry geometry{Geometry::desk(128)};
    FilterKind filter{FilterKind::RamLak};
    nn::NetSpec net{};

    void validate() const {
        require(epochs >= 1, "train: epochs must be >= 1");
        require(batch_size >= 1, "train: batch_size must be >= 1");
        require(lr_init > 0.0 && lr_final > 0.0 && lr_final <= lr_init, "train: need 0 < lr_final <= lr_init");
        require(weight_decay >= 0.0, "train: weight_decay must be >= 0");
        require(momentum >= 0.0 && momentum < 1.0, "train: momentum must be in [0, 1)");
        require(n_train >= 0 && n_val >= 0, "train: sample counts must be >= 0");
        require(roi_n >= 1 && roi_n <= image_n, "train: roi_n must be in [1, image_n]");
        require(min_ellipses >= 1 && min_ellipses <= max_ellipses && max_ellipses <= 32,
                "train: need 1 <= min_ellipses <= max_ellipses <= 32");
        net.validate();
        require(roi_n % net.divisor() == 0, "train: roi_n must be divisible by 2^stages");
        geometry.validate();
    }

    /// Learning rate of a 0-based epoch: geometric from lr_init to lr_final.
    [[nodiscard]] double learning_rate(int epoch) const {
        if (epochs == 1) return lr_init;
        return lr_init * std::pow(lr_final / lr_init, static_cast<double>(epoch) / (epochs - 1));
    }
};

struct Sample {
    Image input;   // ROI of FBP applied to truncated data
    Image target;  // ROI of the rasterized phantom
};

struct Dataset {
    std::vector<Sample> samples;
    double input_mean{0.0};
    double input_std{0.0};
    double target_mean{0.0};
    double target_std{0.0};
};

/// Phantom `index` of the synthetic population seeded by `base`.
inline Phantom dataset_phantom(std::uint64_t base, std::uint64_t index, int min_ellipses, int max_ellipses) {
    const std::uint64_t seed = derive_seed(base, index);
    Pcg32 rng(seed, 1013);
    const int count = min_ellipses + static_cast<int>(rng.bounded(static_cast<std::uint32_t>(max_ellipses - min_ellipses + 1)));
    return make_random_phantom(seed, count);
}

/// One training pair: crop(M T R rasterize(p)) and crop(rasterize(p)).
inline Sample make_sample(const Phantom& p, const TrainConfig& cfg) {
    const Image truth = rasterize(p, cfg.image_n);
    const Sinogram y = radon_forward_truncated(truth, cfg.geometry);
    const Image recon = fbp_reconstruct(y, FilterSpec::for_detectors(cfg.geometry.n_det, cfg.filter), cfg.image_n);
    return Sample{crop_roi(recon, cfg.roi_n), crop_roi(truth, cfg.roi_n)};
}

namespace detail {

inline void fill_stats(Dataset& d) {
    double n = 0.0;
    double si = 0.0;
    double si2 = 0.0;
    double st = 0.0;
    double st2 = 0.0;
    for (const auto& s : d.samples) {
        for (double v : s.input.values()) {
            si += v;
            si2 += v * v;
        }
        for (double v : s.target.values()) {
            st += v;
            st2 += v * v;
        }
        n += static_cast<double>(s.input.size());
    }
    if (n == 0.0) return;
    d.input_mean = si / n;
    d.input_std = std::sqrt(std::max(0.0, si2 / n - d.input_mean * d.input_mean));
    d.target_mean = st / n;
    d.target_std = std::sqrt(std::max(0.0, st2 / n - d.target_mean * d.target_mean));
}

}  // namespace detail

/// Samples [first, first + count) of the population. Training uses indices
/// [0, n_train), validation the n_val after those.
inline Dataset make_dataset_range(const TrainConfig& cfg, int first, int count) {
    require(count >= 1, "make_dataset: empty dataset");
    Dataset d;
    d.samples.reserve(static_cast<std::size_t>(count));
    for (int i = first; i < first + count; ++i) {
        d.samples.push_back(make_sample(
            dataset_phantom(cfg.seed, static_cast<std::uint64_t>(i), cfg.min_ellipses, cfg.max_ellipses), cfg));
    }
    detail::fill_stats(d);
    return d;
}

inline Dataset make_dataset(const TrainConfig& cfg) {
    cfg.validate();
    return make_dataset_range(cfg, 0, cfg.n_train);
}

inline Dataset make_validation_set(const TrainConfig& cfg) {
    cfg.validate();
    return make_dataset_range(cfg, cfg.n_train, cfg.n_val);
}

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EpochRecord {
    int epoch{0};
    double learning_rate{0.0};
    double train_loss{0.0};  // mean of the batch losses
    double val_psnr{0.0};    // NaN without a validation set
};

struct TrainResult {
    nn::NetworkParams<float> params;
    std::vector<EpochRecord> history;
};

using Net = nn::NetworkParams<float>;

namespace detail {

inline nn::Tensor4<float> stack_inputs(const std::vector<const Image*>& images) {
    return nn::stack_images<float>(std::span<const Image* const>(images.data(), images.size()));
}

}  // namespace detail

/// Network output for a batch of ROI FBP images (infer mode, pure).
inline std::vector<Image> apply_network(const Net& params, const std::vector<const Image*>& inputs) {
    const nn::Tensor4<float> x = detail::stack_inputs(inputs);
    const nn::Tensor4<float> y = nn::unet_forward(x, params, nn::Mode::Infer);
    std::vector<Image> out;
    out.reserve(inputs.size());
    for (int i = 0; i < y.n(); ++i) out.push_back(nn::channel_to_image(y, i));
    return out;
}

inline Image apply_network(const Net& params, const Image& input) {
    return std::move(apply_network(params, std::vector<const Image*>{&input}).front());
}

/// Mean ROI PSNR of the network on a dataset.
inline double mean_psnr(const Net& params, const Dataset& data, int batch = 8) {
    double acc = 0.0;
    for (std::size_t i = 0; i < data.samples.size(); i += static_cast<std::size_t>(batch)) {
        std::vector<const Image*> inputs;
        for (std::size_t j = i; j < std::min(data.samples.size(), i + static_cast<std::size_t>(batch)); ++j) {
            inputs.push_back(&data.samples[j].input);
        }
        const auto outs = apply_network(params, inputs);
        for (std::size_t j = 0; j < outs.size(); ++j) acc += psnr(data.samples[i + j].target, outs[j]);
    }
    return acc / static_cast<double>(data.samples.size());
}

/// Minibatch SGD with momentum on the squared error (see LossReduction):
/// v = momentum * v + grad, w -= lr * v, with weight decay on conv kernels only.
inline TrainResult train(const TrainConfig& cfg, const Dataset& data, const Dataset* validation = nullptr,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    cfg.validate();
    require(!data.samples.empty(), "train: dataset is empty");
    const int side = data.samples.front().input.rows();
    require(side % cfg.net.divisor() == 0, "train: image dims must be divisible by 2^stages");

    TrainResult res{nn::he_init<float>(cfg.net, derive_seed(cfg.seed, 0xC0FFEE)), {}};
    Net& p = res.params;
    std::vector<std::vector<float>> velocity;
    for (const auto& t : p.tensors) velocity.emplace_back(t.data.size(), 0.0f);

    Pcg32 shuffler(derive_seed(cfg.seed, 0x5EED), 7);
    std::vector<std::size_t> order(data.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = shuffler.bounded(static_cast<std::uint32_t>(i));
            std::swap(order[i - 1], order[j]);
        }
        const auto lr = static_cast<float>(cfg.learning_rate(epoch));
        const auto mom = static_cast<float>(cfg.momentum);
        const auto wd = static_cast<float>(cfg.weight_decay);
        double loss_sum = 0.0;
        int steps = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            std::vector<const Image*> inputs;
            std::vector<const Image*> targets;
            for (std::size_t k = start; k < std::min(order.size(), start + batch); ++k) {
                inputs.push_back(&data.samples[order[k]].input);
                targets.push_back(&data.samples[order[k]].target);
            }
            const nn::Tensor4<float> x = detail::stack_inputs(inputs);
            const nn::Tensor4<float> t = detail::stack_inputs(targets);
            nn::UnetCache<float> cache;
            const nn::Tensor4<float> y = nn::unet_forward(x, p, nn::Mode::Train, &cache);

            nn::Tensor4<float> grad(y.n(), y.c(), y.h(), y.w());
            double loss = 0.0;
            const auto count = static_cast<double>(cfg.loss == LossReduction::Sum ? y.n() : y.size());
            for (std::size_t k = 0; k < y.size(); ++k) {
                const double d = static_cast<double>(y.data()[k]) - t.data()[k];
                loss += d * d;
                grad.data()[k] = static_cast<float>(2.0 * d / count);
            }
            loss /= count;
            if (!std::isfinite(loss)) {
                throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                                    std::to_string(steps + 1) + " (learning rate " + std::to_string(lr) + ")");
            }
            const nn::UnetGrads<float> g = nn::unet_backward(grad, cache, p);
            for (std::size_t k = 0; k < p.tensors.size(); ++k) {
                if (!p.trainable(k)) continue;
                auto& w = p.tensors[k].data;
                const auto& gw = g.params[k].data;
                auto& v = velocity[k];
                const bool decay = p.kinds[k] == nn::ParamKind::Kernel;
                for (std::size_t e = 0; e < w.size(); ++e) {
                    const float ge = decay ? gw[e] + wd * w[e] : gw[e];
                    v[e] = mom * v[e] + ge;
                    w[e] -= lr * v[e];
                }
            }
            nn::apply_running_stats(p, cache);
            loss_sum += loss;
            ++steps;
        }
        EpochRecord rec{epoch + 1, static_cast<double>(lr), loss_sum / steps, std::nan("")};
        if (validation != nullptr && !validation->samples.empty()) rec.val_psnr = mean_psnr(p, *validation);
        res.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return res;
}

/// h = Q M y: FBP of the truncated data, ROI crop, then the network.
inline Image infer(const Net& params, const Sinogram& y, const TrainConfig& cfg) {
    require(y.geometry == cfg.geometry, "infer: sinogram geometry differs from the training geometry");
    const Image recon = fbp_reconstruct(y, FilterSpec::for_detectors(cfg.geometry.n_det, cfg.filter), cfg.image_n);
    return apply_network(params, crop_roi(recon, cfg.roi_n));
}

inline void write_history_csv(std::ostream& os, const std::vector<EpochRecord>& history) {
    os << "epoch,learning_rate,train_loss,val_psnr_db\n";
    for (const auto& r : history) {
        os << r.epoch << ',' << r.learning_rate << ',' << r.train_loss << ',' << r.val_psnr << '\n';
    }
}

}  // namespace itomo
