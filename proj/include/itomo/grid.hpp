#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace itomo {

/// Thrown when an operation's precondition is violated.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown for malformed files (bad magic, truncated payloads, duplicate names).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw InvalidArgument(message);
    }
}

/// Dense row-major 2-D grid.
template <typename T>
class Grid2 {
public:
    Grid2() = default;
    Grid2(int rows, int cols, T value = T{})
        : rows_(rows), cols_(cols), data_(checked_size(rows, cols), value) {}

    [[nodiscard]] int rows() const { return rows_; }
    [[nodiscard]] int cols() const { return cols_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    T& operator()(int r, int c) { return data_[index(r, c)]; }
    const T& operator()(int r, int c) const { return data_[index(r, c)]; }

    std::span<T> row(int r) { return {data_.data() + index(r, 0), static_cast<std::size_t>(cols_)}; }
    std::span<const T> row(int r) const {
        return {data_.data() + index(r, 0), static_cast<std::size_t>(cols_)};
    }

    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    friend bool operator==(const Grid2&, const Grid2&) = default;

private:
    static std::size_t checked_size(int rows, int cols) {
        require(rows >= 0 && cols >= 0, "grid dimensions must be non-negative");
        return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    }
    [[nodiscard]] std::size_t index(int r, int c) const {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
    }

    int rows_{0};
    int cols_{0};
    std::vector<T> data_;
};

/// Square image on the physical domain [-1,1]^2. Column index maps to x, row
/// index to y; pixel (i, j) has center (-1 + (j + 0.5) h, -1 + (i + 0.5) h),
/// h = 2 / n.
using Image = Grid2<double>;

inline Image make_image(int n) {
    require(n >= 1, "image size must be positive");
    return Image(n, n, 0.0);
}

inline double pixel_size(int n) { return 2.0 / n; }

inline double pixel_center(int index, int n) { return -1.0 + (index + 0.5) * pixel_size(n); }

}  // namespace itomo
