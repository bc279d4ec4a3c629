#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace dsam {

// Learnable tensor with its gradient accumulator and momentum buffer.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor velocity;

    Param() = default;
    Param(std::string param_name, Tensor v)
        : name(std::move(param_name)),
          value(std::move(v)),
          grad(Tensor::zeros(value.n(), value.c(), value.h(), value.w())),
          velocity(Tensor::zeros(value.n(), value.c(), value.h(), value.w())) {}

    void zero_grad() { grad.fill(0.0); }
    // fan-in scaled random uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]
    void init_uniform(Rng& rng, std::int64_t fan_in);
};

enum class Nonlinearity { relu, tanh_fn, identity };

Nonlinearity nonlinearity_from_string(const std::string& s);
std::string to_string(Nonlinearity f);

Tensor activate(Nonlinearity f, const Tensor& z);
// dz given pre-activation z and upstream dy
Tensor activate_backward(Nonlinearity f, const Tensor& z, const Tensor& dy);

// Plain 2-d convolution; output size floor((in + 2*pad - k) / stride) + 1.
class Conv2d {
public:
    Conv2d(std::int64_t in_channels, std::int64_t out_channels, std::int64_t ksize,
           std::int64_t stride, std::int64_t pad, const std::string& name);

    Tensor forward(const Tensor& x) const;
    // Accumulates weight/bias gradients and returns the input gradient.
    Tensor backward(const Tensor& x, const Tensor& grad_out);

    void init_uniform(Rng& rng);
    std::vector<Param*> params() { return {&weight, &bias}; }

    std::int64_t in_channels, out_channels, ksize, stride, pad;
    Param weight;  // (out_channels, in_channels, k, k)
    Param bias;    // (1, out_channels, 1, 1)
};

// Fully connected layer on collapsed maps (batch, features, 1, 1).
class Linear {
public:
    Linear(std::int64_t in_features, std::int64_t out_features, const std::string& name);

    Tensor forward(const Tensor& x) const;
    Tensor backward(const Tensor& x, const Tensor& grad_out);

    void init_uniform(Rng& rng);
    std::vector<Param*> params() { return {&weight, &bias}; }

    std::int64_t in_features, out_features;
    Param weight;  // (out_features, in_features, 1, 1)
    Param bias;    // (1, out_features, 1, 1)
};

struct PoolCache {
    std::vector<std::int64_t> argmax;  // flat input index per output element
    std::int64_t n = 0, c = 0, h = 0, w = 0;
};

// Non-overlapping max pooling with kernel == stride == factor.
Tensor max_pool(const Tensor& x, std::int64_t factor, PoolCache* cache = nullptr);
Tensor max_pool_backward(const PoolCache& cache, const Tensor& grad_out);

// Keeps every factor-th pixel anchored at (0, 0); the spatial reduction a
// strided 1x1 convolution performs.
Tensor subsample(const Tensor& x, std::int64_t factor);
Tensor subsample_backward(std::int64_t in_h, std::int64_t in_w, std::int64_t factor,
                          const Tensor& grad_out);

Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(std::int64_t in_h, std::int64_t in_w, const Tensor& grad_out);

// Inverted dropout; mask entries are 0 or 1/(1-rate).
Tensor dropout(const Tensor& x, real rate, Rng& rng, Tensor& mask_out);
Tensor dropout_backward(const Tensor& mask, const Tensor& grad_out);

// Mean-per-sample softmax cross entropy over logits (batch, classes, 1, 1).
// Returns the scalar loss; writes d(loss)/d(logits) when grad is non-null.
real softmax_cross_entropy_mean(const Tensor& logits, const std::vector<int>& labels,
                                Tensor* grad);

}  // namespace dsam
