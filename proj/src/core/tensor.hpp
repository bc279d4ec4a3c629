#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace dsam {

using real = double;

// 4-d activation tensor with (batch, channels, height, width) layout,
// row-major and contiguous. Fully connected outputs are represented with
// h = w = 1. All dimensions are >= 1.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w);

    static Tensor zeros(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w);
    static Tensor full(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w, real value);

    std::int64_t n() const { return n_; }
    std::int64_t c() const { return c_; }
    std::int64_t h() const { return h_; }
    std::int64_t w() const { return w_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    real& at(std::int64_t i, std::int64_t c, std::int64_t y, std::int64_t x) {
        return data_[((i * c_ + c) * h_ + y) * w_ + x];
    }
    real at(std::int64_t i, std::int64_t c, std::int64_t y, std::int64_t x) const {
        return data_[((i * c_ + c) * h_ + y) * w_ + x];
    }

    // (batch, features) accessors for collapsed maps
    real& at2(std::int64_t i, std::int64_t f) { return data_[i * c_ * h_ * w_ + f]; }
    real at2(std::int64_t i, std::int64_t f) const { return data_[i * c_ * h_ * w_ + f]; }

    // features per sample (c*h*w)
    std::int64_t sample_size() const { return c_ * h_ * w_; }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }
    std::vector<real>& vec() { return data_; }
    const std::vector<real>& vec() const { return data_; }

    void fill(real v);
    bool same_shape(const Tensor& other) const {
        return n_ == other.n_ && c_ == other.c_ && h_ == other.h_ && w_ == other.w_;
    }
    std::string shape_str() const;

    bool operator==(const Tensor& other) const {
        return same_shape(other) && data_ == other.data_;
    }

private:
    std::int64_t n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<real> data_;
};

// Rank-2 activation (batch rows, feature columns), row-major.
struct Matrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<real> data;

    Matrix() = default;
    Matrix(std::int64_t r, std::int64_t c)
        : rows(r), cols(c), data(static_cast<std::size_t>(r * c), 0.0) {}

    real& at(std::int64_t r, std::int64_t c) { return data[r * cols + c]; }
    real at(std::int64_t r, std::int64_t c) const { return data[r * cols + c]; }
    bool valid() const {
        return rows >= 1 && cols >= 1 &&
               data.size() == static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    }
};

// Throws ShapeError naming `dim` when got != want.
void check_dim(const char* context, const char* dim, std::int64_t got, std::int64_t want);

// Channel-wise concatenation of two maps with equal batch and spatial size.
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits a gradient of concat_channels(a, b) back into the two inputs.
void split_channels(const Tensor& grad, Tensor& grad_a, Tensor& grad_b);

bool all_finite(const Tensor& t);

}  // namespace dsam
