#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dsam {

Tensor::Tensor(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w)
    : n_(n), c_(c), h_(h), w_(w) {
    if (n < 1 || c < 1 || h < 1 || w < 1) {
        std::ostringstream os;
        os << "tensor dimensions must be >= 1, got (" << n << ", " << c << ", " << h << ", " << w
           << ")";
        throw ShapeError(os.str());
    }
    data_.assign(static_cast<std::size_t>(n * c * h * w), 0.0);
}

Tensor Tensor::zeros(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return Tensor(n, c, h, w);
}

Tensor Tensor::full(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w, real value) {
    Tensor t(n, c, h, w);
    t.fill(value);
    return t;
}

void Tensor::fill(real v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(" << n_ << ", " << c_ << ", " << h_ << ", " << w_ << ")";
    return os.str();
}

void check_dim(const char* context, const char* dim, std::int64_t got, std::int64_t want) {
    if (got != want) {
        std::ostringstream os;
        os << context << ": " << dim << " mismatch, got " << got << ", expected " << want;
        throw ShapeError(os.str());
    }
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    check_dim("concat_channels", "batch", b.n(), a.n());
    check_dim("concat_channels", "height", b.h(), a.h());
    check_dim("concat_channels", "width", b.w(), a.w());
    Tensor out(a.n(), a.c() + b.c(), a.h(), a.w());
    const std::int64_t plane = a.h() * a.w();
    for (std::int64_t i = 0; i < a.n(); ++i) {
        std::copy_n(a.data() + i * a.c() * plane, a.c() * plane,
                    out.data() + i * out.c() * plane);
        std::copy_n(b.data() + i * b.c() * plane, b.c() * plane,
                    out.data() + (i * out.c() + a.c()) * plane);
    }
    return out;
}

void split_channels(const Tensor& grad, Tensor& grad_a, Tensor& grad_b) {
    check_dim("split_channels", "channels", grad.c(), grad_a.c() + grad_b.c());
    const std::int64_t plane = grad.h() * grad.w();
    for (std::int64_t i = 0; i < grad.n(); ++i) {
        std::copy_n(grad.data() + i * grad.c() * plane, grad_a.c() * plane,
                    grad_a.data() + i * grad_a.c() * plane);
        std::copy_n(grad.data() + (i * grad.c() + grad_a.c()) * plane, grad_b.c() * plane,
                    grad_b.data() + i * grad_b.c() * plane);
    }
}

bool all_finite(const Tensor& t) {
    for (real v : t.vec()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace dsam
