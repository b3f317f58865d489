#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "mvms/core/array2d.hpp"
#include "mvms/core/error.hpp"

namespace mvms::diff {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

/// Dense row-major tensor of doubles. Feature maps are rank 3 (C, H, W),
/// convolution kernels rank 4 (out, in, kh, kw), biases rank 1, scalars rank 0.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_size(shape_)) throw ShapeError("Tensor: data size does not match " + shape_string(shape_));
    }

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    /// Single-channel feature map from an image.
    static Tensor from_image(const Array2D& img) {
        return Tensor(Shape{1, img.rows(), img.cols()}, img.values());
    }

    Array2D to_image() const {
        if (rank() != 3 || shape_[0] != 1) throw ShapeError("to_image: expected a 1xHxW tensor, got " + shape_string(shape_));
        return Array2D(shape_[1], shape_[2], data_);
    }

    /// Channel `c` of a rank-3 tensor as an image.
    Array2D channel(std::size_t c) const {
        if (rank() != 3 || c >= shape_[0]) throw ShapeError("channel: index out of range");
        const std::size_t plane = shape_[1] * shape_[2];
        return Array2D(shape_[1], shape_[2],
                       std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(c * plane),
                                           data_.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane)));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }

    std::size_t channels() const { return dim(0); }
    std::size_t height() const { return dim(1); }
    std::size_t width() const { return dim(2); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double item() const {
        if (data_.size() != 1) throw ShapeError("item: tensor is not a scalar");
        return data_[0];
    }

    void add_(const Tensor& o) {
        if (o.data_.size() != data_.size()) throw ShapeError("add_: size mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

} // namespace mvms::diff
