#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "itomo/grid.hpp"

namespace itomo::nn {

/// Dense NCHW activation tensor, row-major.
template <typename T>
class Tensor4 {
public:
    Tensor4() = default;
    Tensor4(int n, int c, int h, int w, T value = T{}) : n_(n), c_(c), h_(h), w_(w) {
        require(n >= 1 && c >= 1 && h >= 1 && w >= 1, "tensor dims must be >= 1");
        data_.assign(static_cast<std::size_t>(n) * c * h * w, value);
    }

    [[nodiscard]] int n() const { return n_; }
    [[nodiscard]] int c() const { return c_; }
    [[nodiscard]] int h() const { return h_; }
    [[nodiscard]] int w() const { return w_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h_) * w_; }
    [[nodiscard]] std::size_t sample_size() const { return static_cast<std::size_t>(c_) * plane(); }

    T& at(int n, int c, int y, int x) { return data_[offset(n, c) + static_cast<std::size_t>(y) * w_ + x]; }
    const T& at(int n, int c, int y, int x) const { return data_[offset(n, c) + static_cast<std::size_t>(y) * w_ + x]; }

    T* channel(int n, int c) { return data_.data() + offset(n, c); }
    const T* channel(int n, int c) const { return data_.data() + offset(n, c); }
    T* sample(int n) { return channel(n, 0); }
    const T* sample(int n) const { return channel(n, 0); }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    [[nodiscard]] bool same_shape(const Tensor4& o) const {
        return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
    }

    friend bool operator==(const Tensor4&, const Tensor4&) = default;

private:
    [[nodiscard]] std::size_t offset(int n, int c) const {
        return (static_cast<std::size_t>(n) * c_ + c) * plane();
    }

    int n_{0};
    int c_{0};
    int h_{0};
    int w_{0};
    std::vector<T> data_;
};

/// Named parameter tensor with an arbitrary shape.
template <typename T>
struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<T> data;

    [[nodiscard]] std::size_t numel() const {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }

    friend bool operator==(const ParamTensor&, const ParamTensor&) = default;
};

/// Stacks single-channel images into an (N, 1, H, W) tensor.
template <typename T>
Tensor4<T> stack_images(std::span<const Image* const> images) {
    require(!images.empty(), "stack_images needs at least one image");
    const int h = images.front()->rows();
    const int w = images.front()->cols();
    Tensor4<T> t(static_cast<int>(images.size()), 1, h, w);
    for (std::size_t i = 0; i < images.size(); ++i) {
        require(images[i]->rows() == h && images[i]->cols() == w, "stack_images: size mismatch");
        std::transform(images[i]->values().begin(), images[i]->values().end(), t.sample(static_cast<int>(i)),
                       [](double v) { return static_cast<T>(v); });
    }
    return t;
}

template <typename T>
Image channel_to_image(const Tensor4<T>& t, int n, int c = 0) {
    Image img(t.h(), t.w());
    std::transform(t.channel(n, c), t.channel(n, c) + t.plane(), img.values().begin(),
                   [](T v) { return static_cast<double>(v); });
    return img;
}

}  // namespace itomo::nn
